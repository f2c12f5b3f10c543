//! Model transport: prompt bundles, an HTTP chat-completion backend, and a
//! deterministic mock backend for tests.
//!
//! Transport is strictly transport: a backend returns the assistant text
//! verbatim and never interprets it. Parsing belongs to the action grammar.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use image::DynamicImage;
use serde_json::{json, Value};
use zoomground_core::prompt;

/// One fully-instantiated request: system text, user text, screenshot.
#[derive(Clone)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub image: DynamicImage,
}

impl PromptBundle {
    /// Refinement request for an instruction and screenshot.
    pub fn refinement(instruction: &str, image: &DynamicImage) -> Result<Self, BackendError> {
        let user_text = prompt::refinement_user_prompt(instruction)
            .map_err(|_| BackendError::EmptyInstruction)?;
        Ok(PromptBundle {
            system_text: prompt::REFINEMENT_SYSTEM_PROMPT.to_string(),
            user_text,
            image: image.clone(),
        })
    }

    /// Grounding request for a (refined) instruction and screenshot.
    pub fn grounding(refined: &str, image: &DynamicImage) -> Result<Self, BackendError> {
        let user_text =
            prompt::grounding_user_prompt(refined).map_err(|_| BackendError::EmptyInstruction)?;
        Ok(PromptBundle {
            system_text: prompt::GROUNDING_SYSTEM_PROMPT.to_string(),
            user_text,
            image: image.clone(),
        })
    }
}

/// Connection settings for one model endpoint.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "defaults::timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    #[serde(default = "defaults::max_parallel")]
    pub max_parallel: usize,
    /// Name of the environment variable holding the API key; never the key
    /// itself.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

mod defaults {
    pub fn timeout_s() -> u64 {
        120
    }
    pub fn max_retries() -> u32 {
        2
    }
    pub fn max_parallel() -> usize {
        4
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_s == 0 {
            return Err(BackendError::Config("timeout must be > 0".into()));
        }
        if self.max_parallel == 0 {
            return Err(BackendError::Config("max_parallel must be >= 1".into()));
        }
        Ok(())
    }
}

/// Successful completion: assistant text plus transport bookkeeping.
#[derive(Clone, Debug)]
pub struct CompletionOutcome {
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("instruction must be non-empty")]
    EmptyInstruction,
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("request {request_id}: timed out after {attempts} attempt(s)")]
    Timeout { request_id: u64, attempts: u32 },
    #[error("request {request_id}: transport failed after {attempts} attempt(s): {detail}")]
    Transport {
        request_id: u64,
        attempts: u32,
        detail: String,
    },
    #[error("request {request_id}: protocol error, status {status}: {detail}")]
    Protocol {
        request_id: u64,
        status: u16,
        detail: String,
    },
    #[error("request {request_id}: malformed response, no text content")]
    MalformedResponse { request_id: u64 },
    #[error("mock script exhausted at call {call}")]
    ScriptExhausted { call: usize },
    #[error("image encoding failed: {0}")]
    ImageEncode(String),
}

/// A completion backend. Shareable across concurrent callers; each call is
/// independent.
pub trait Backend: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionOutcome, BackendError>;
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            permits: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().unwrap() += 1;
        self.limiter.cv.notify_one();
    }
}

/// HTTP JSON chat-completion backend. Sends the screenshot inline as a
/// base64 PNG data URI and requests temperature 0 for reproducibility.
pub struct HttpBackend {
    cfg: BackendConfig,
    http: reqwest::blocking::Client,
    limiter: Limiter,
    next_request_id: AtomicUsize,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_s))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            limiter: Limiter::new(cfg.max_parallel),
            http,
            cfg,
            next_request_id: AtomicUsize::new(1),
        })
    }

    fn payload(&self, bundle: &PromptBundle) -> Result<Value, BackendError> {
        let mut png = Vec::new();
        bundle
            .image
            .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| BackendError::ImageEncode(e.to_string()))?;
        let data_uri = format!(
            "data:image/png;base64,{}",
            base64::engine::general_purpose::STANDARD.encode(&png)
        );
        Ok(json!({
            "model": self.cfg.model_name,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": bundle.system_text },
                { "role": "user", "content": [
                    { "type": "text", "text": bundle.user_text },
                    { "type": "image_url", "image_url": { "url": data_uri } },
                ]},
            ],
        }))
    }

    fn extract_text(body: &Value) -> Option<String> {
        let content = &body["choices"][0]["message"]["content"];
        if let Some(s) = content.as_str() {
            return Some(s.to_string());
        }
        // Some servers return content as a list of typed parts.
        content.as_array().map(|parts| {
            parts
                .iter()
                .filter_map(|p| p["text"].as_str())
                .collect::<Vec<_>>()
                .join("")
        })
    }
}

impl Backend for HttpBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionOutcome, BackendError> {
        let request_id = self.next_request_id.fetch_add(1, Ordering::Relaxed) as u64;
        let payload = self.payload(bundle)?;
        let _permit = self.limiter.acquire();
        let start = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut req = self.http.post(&self.cfg.endpoint).json(&payload);
            if let Some(var) = &self.cfg.api_key_env {
                if let Ok(key) = std::env::var(var) {
                    req = req.bearer_auth(key);
                }
            }
            let retryable: Result<(), String> = match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let body: Value = resp.json().map_err(|_| BackendError::MalformedResponse {
                            request_id,
                        })?;
                        let text = Self::extract_text(&body)
                            .ok_or(BackendError::MalformedResponse { request_id })?;
                        return Ok(CompletionOutcome {
                            text,
                            latency_ms: start.elapsed().as_millis() as u64,
                            attempt_count: attempts,
                        });
                    } else if status.is_server_error() {
                        // Transient; retry with backoff.
                        Err(format!("status {status}"))
                    } else {
                        return Err(BackendError::Protocol {
                            request_id,
                            status: status.as_u16(),
                            detail: resp.text().unwrap_or_default(),
                        });
                    }
                }
                Err(e) if e.is_timeout() => {
                    if attempts > self.cfg.max_retries {
                        return Err(BackendError::Timeout {
                            request_id,
                            attempts,
                        });
                    }
                    Err("timeout".to_string())
                }
                Err(e) => Err(e.to_string()),
            };
            if let Err(detail) = retryable {
                if attempts > self.cfg.max_retries {
                    return Err(BackendError::Transport {
                        request_id,
                        attempts,
                        detail,
                    });
                }
                std::thread::sleep(Duration::from_millis(100 * (1 << (attempts - 1).min(6))));
            }
        }
    }
}

/// One recorded mock request, enough for assertions without holding pixel
/// data.
#[derive(Clone, Debug)]
pub struct RecordedRequest {
    pub system_text: String,
    pub user_text: String,
    pub image_size: (u32, u32),
}

type Handler = Box<dyn Fn(&PromptBundle, usize) -> String + Send + Sync>;

enum MockScript {
    Sequence(Mutex<VecDeque<String>>),
    Handler(Handler),
}

/// Deterministic in-process backend for tests: canned responses either as
/// an ordered script or a handler over the request, with full request
/// recording and a concurrent-request high-water mark.
pub struct MockBackend {
    script: MockScript,
    log: Mutex<Vec<RecordedRequest>>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockBackend {
    /// Responses served in order; exhaustion is an explicit error, never a
    /// silent reuse.
    pub fn from_script<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_script(MockScript::Sequence(Mutex::new(
            responses.into_iter().map(Into::into).collect(),
        )))
    }

    /// Responses computed from the request and the zero-based call ordinal.
    pub fn with_handler<F>(f: F) -> Self
    where
        F: Fn(&PromptBundle, usize) -> String + Send + Sync + 'static,
    {
        Self::with_script(MockScript::Handler(Box::new(f)))
    }

    fn with_script(script: MockScript) -> Self {
        MockBackend {
            script,
            log: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn request_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().unwrap().clone()
    }

    /// Highest number of simultaneously in-flight requests observed.
    pub fn max_concurrency(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<CompletionOutcome, BackendError> {
        let inflight = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(inflight, Ordering::SeqCst);
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(RecordedRequest {
            system_text: bundle.system_text.clone(),
            user_text: bundle.user_text.clone(),
            image_size: (bundle.image.width(), bundle.image.height()),
        });
        let result = match &self.script {
            MockScript::Sequence(q) => q
                .lock()
                .unwrap()
                .pop_front()
                .ok_or(BackendError::ScriptExhausted { call }),
            MockScript::Handler(f) => Ok(f(bundle, call)),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result.map(|text| CompletionOutcome {
            text,
            latency_ms: 0,
            attempt_count: 1,
        })
    }
}
