//! Two-stage grounding orchestration: refine, ground, parse, conditionally
//! zoom, ground again on the crop, and remap back to original coordinates.
//!
//! The second stage is an accuracy refinement, never a correctness
//! requirement: a failed or null second pass falls back to the first-pass
//! answer, and at most one zoom is ever attempted.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::time::Instant;

use image::{DynamicImage, GenericImageView};
use zoomground_core::action::{parse_grounding_output, FormatError, GroundingAction, ParseMode};
use zoomground_core::geometry::{clamp_box, ImageSize, PixelBox, PixelPoint};
use zoomground_core::zoom::{
    compute_zoom_window, map_box_to_original, map_point_to_original, should_zoom, ZoomConfig,
};

use crate::client::{Backend, BackendError, PromptBundle};
use crate::imageops::{crop_and_resize, ImageOpError};

/// When the second grounding pass runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoomMode {
    /// Zoom only when the first-pass box satisfies the small-element
    /// trigger.
    #[default]
    Conditional,
    /// Zoom on every sample with a parseable, non-null first pass.
    Always,
    /// Single-pass grounding.
    Never,
}

impl std::str::FromStr for ZoomMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conditional" => Ok(ZoomMode::Conditional),
            "always" => Ok(ZoomMode::Always),
            "never" => Ok(ZoomMode::Never),
            other => Err(format!("unknown zoom mode `{other}` (expected conditional, always, or never)")),
        }
    }
}

/// Recovery paths taken during one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Refiner transport failed; the original instruction was used.
    RefineFailed,
    /// Second-pass output did not parse; first-pass answer kept.
    SecondParseFailed,
    /// Second pass returned the null action; first-pass answer kept.
    SecondNull,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StageTimings {
    pub refine_ms: Option<u64>,
    pub first_pass_ms: u64,
    pub second_pass_ms: Option<u64>,
}

/// Everything one grounding run produced. Final coordinates are always in
/// original-image space and within image bounds.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroundingResult {
    pub final_point: PixelPoint,
    pub final_box: PixelBox,
    pub first_pass: Option<GroundingAction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_parse_error: Option<FormatError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_pass: Option<GroundingAction>,
    pub zoom_applied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refined_instruction: Option<String>,
    pub fallbacks: Vec<Fallback>,
    pub timings: StageTimings,
}

impl GroundingResult {
    /// True when the run ended in null semantics: either the model emitted
    /// the null action or its first pass was unparseable.
    pub fn is_null(&self) -> bool {
        self.final_point.is_zero() && self.final_box.is_zero()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("grounder backend failed: {0}")]
    Grounder(#[source] BackendError),
    #[error(transparent)]
    Image(#[from] ImageOpError),
    #[error("instruction must be non-empty")]
    EmptyInstruction,
    #[error("image has a zero dimension")]
    EmptyImage,
}

/// Immutable configuration plus stateless logic; one instance can ground
/// many samples concurrently, bounded only by the backend limiter.
pub struct Pipeline<'a> {
    pub refiner: Option<&'a dyn Backend>,
    pub grounder: &'a dyn Backend,
    pub zoom_cfg: ZoomConfig,
    pub zoom_mode: ZoomMode,
    /// When set, every zoom crop is dumped as a PNG into this directory.
    pub dump_zoom_crops: Option<PathBuf>,
}

impl<'a> Pipeline<'a> {
    pub fn new(grounder: &'a dyn Backend) -> Self {
        Pipeline {
            refiner: None,
            grounder,
            zoom_cfg: ZoomConfig::default(),
            zoom_mode: ZoomMode::Conditional,
            dump_zoom_crops: None,
        }
    }

    pub fn with_refiner(mut self, refiner: &'a dyn Backend) -> Self {
        self.refiner = Some(refiner);
        self
    }

    pub fn with_zoom(mut self, cfg: ZoomConfig, mode: ZoomMode) -> Self {
        self.zoom_cfg = cfg;
        self.zoom_mode = mode;
        self
    }

    /// Grounds one instruction against one screenshot.
    pub fn ground(
        &self,
        instruction: &str,
        image: &DynamicImage,
    ) -> Result<GroundingResult, PipelineError> {
        if instruction.is_empty() {
            return Err(PipelineError::EmptyInstruction);
        }
        let (w, h) = image.dimensions();
        let img_size = ImageSize::try_new(w, h).map_err(|_| PipelineError::EmptyImage)?;

        let mut fallbacks = Vec::new();
        let mut timings = StageTimings::default();

        // Stage 1: instruction refinement. Transport failure falls back to
        // the original instruction; the sample still runs.
        let mut refined_instruction = None;
        let refined: String = match self.refiner {
            Some(refiner) => {
                let start = Instant::now();
                let bundle = PromptBundle::refinement(instruction, image)
                    .map_err(|_| PipelineError::EmptyInstruction)?;
                let out = refiner.complete(&bundle);
                timings.refine_ms = Some(start.elapsed().as_millis() as u64);
                match out {
                    Ok(c) if !c.text.trim().is_empty() => {
                        let text = c.text.trim().to_string();
                        refined_instruction = Some(text.clone());
                        text
                    }
                    _ => {
                        fallbacks.push(Fallback::RefineFailed);
                        instruction.to_string()
                    }
                }
            }
            None => instruction.to_string(),
        };

        // Stage 2: first grounding pass.
        let start = Instant::now();
        let bundle = PromptBundle::grounding(&refined, image)
            .map_err(|_| PipelineError::EmptyInstruction)?;
        let completion = self
            .grounder
            .complete(&bundle)
            .map_err(PipelineError::Grounder)?;
        timings.first_pass_ms = start.elapsed().as_millis() as u64;

        let first = match parse_grounding_output(&completion.text, ParseMode::Lenient) {
            Ok(action) => action,
            Err(e) => {
                // Unparseable first pass: flagged, null semantics, no zoom.
                return Ok(GroundingResult {
                    final_point: PixelPoint::ORIGIN,
                    final_box: PixelBox::ZERO,
                    first_pass: None,
                    first_parse_error: Some(e),
                    second_pass: None,
                    zoom_applied: false,
                    refined_instruction,
                    fallbacks,
                    timings,
                });
            }
        };

        if first.is_null() {
            return Ok(GroundingResult {
                final_point: PixelPoint::ORIGIN,
                final_box: PixelBox::ZERO,
                first_pass: Some(first),
                first_parse_error: None,
                second_pass: None,
                zoom_applied: false,
                refined_instruction,
                fallbacks,
                timings,
            });
        }

        let first_point = clamp_point(first.point, img_size);
        let first_box = clamp_box(first.bbox, img_size);

        let zoom_wanted = match self.zoom_mode {
            ZoomMode::Never => false,
            ZoomMode::Always => true,
            ZoomMode::Conditional => should_zoom(first.bbox, &self.zoom_cfg),
        };

        if !zoom_wanted {
            return Ok(GroundingResult {
                final_point: first_point,
                final_box: first_box,
                first_pass: Some(first),
                first_parse_error: None,
                second_pass: None,
                zoom_applied: false,
                refined_instruction,
                fallbacks,
                timings,
            });
        }

        // Stage 3: zoomed second pass, same refined instruction.
        let start = Instant::now();
        let transform = compute_zoom_window(first_point, img_size, &self.zoom_cfg);
        let zoomed = crop_and_resize(image, &transform)?;
        self.maybe_dump_crop(&zoomed, instruction);
        let bundle = PromptBundle::grounding(&refined, &zoomed)
            .map_err(|_| PipelineError::EmptyInstruction)?;
        let completion = self
            .grounder
            .complete(&bundle)
            .map_err(PipelineError::Grounder)?;

        let (final_point, final_box, second_pass) =
            match parse_grounding_output(&completion.text, ParseMode::Lenient) {
                Ok(second) if second.is_null() => {
                    fallbacks.push(Fallback::SecondNull);
                    (first_point, first_box, Some(second))
                }
                Ok(second) => {
                    let point = map_point_to_original(second.point, &transform);
                    let bbox = clamp_box(map_box_to_original(second.bbox, &transform), img_size);
                    (point, bbox, Some(second))
                }
                Err(_) => {
                    fallbacks.push(Fallback::SecondParseFailed);
                    (first_point, first_box, None)
                }
            };
        timings.second_pass_ms = Some(start.elapsed().as_millis() as u64);

        Ok(GroundingResult {
            final_point,
            final_box,
            first_pass: Some(first),
            first_parse_error: None,
            second_pass,
            zoom_applied: true,
            refined_instruction,
            fallbacks,
            timings,
        })
    }

    fn maybe_dump_crop(&self, zoomed: &DynamicImage, instruction: &str) {
        if let Some(dir) = &self.dump_zoom_crops {
            let mut hasher = DefaultHasher::new();
            instruction.hash(&mut hasher);
            let path = dir.join(format!("zoom_{:016x}.png", hasher.finish()));
            if std::fs::create_dir_all(dir).is_ok() {
                let _ = zoomed.save(&path);
            }
        }
    }
}

fn clamp_point(p: PixelPoint, s: ImageSize) -> PixelPoint {
    PixelPoint::new(p.x.min(s.width - 1), p.y.min(s.height - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::MockBackend;
    use zoomground_core::action::{serialize, Verb};

    fn action_text(px: u32, py: u32, bx: PixelBox) -> String {
        serialize(&GroundingAction {
            verb: Verb::Click,
            point: PixelPoint::new(px, py),
            bbox: bx,
            raw_text: String::new(),
        })
    }

    fn img(w: u32, h: u32) -> DynamicImage {
        DynamicImage::new_rgb8(w, h)
    }

    fn small_cfg() -> ZoomConfig {
        ZoomConfig::try_new(100, 300, 2.0).unwrap()
    }

    #[test]
    fn large_box_stays_single_pass() {
        let mock = MockBackend::from_script([action_text(
            500,
            500,
            PixelBox::try_new(400, 300, 600, 700).unwrap(),
        )]);
        let p = Pipeline::new(&mock).with_zoom(small_cfg(), ZoomMode::Conditional);
        let r = p.ground("press ok", &img(1000, 1000)).unwrap();
        assert!(!r.zoom_applied);
        assert_eq!(mock.request_count(), 1);
        assert_eq!(r.final_point, PixelPoint::new(500, 500));
    }

    #[test]
    fn small_box_triggers_second_pass_with_remap() {
        let first = action_text(500, 500, PixelBox::try_new(480, 480, 520, 520).unwrap());
        let second = action_text(400, 400, PixelBox::try_new(380, 380, 420, 420).unwrap());
        let mock = MockBackend::from_script([first, second]);
        let p = Pipeline::new(&mock).with_zoom(small_cfg(), ZoomMode::Conditional);
        let r = p.ground("press ok", &img(1000, 1000)).unwrap();
        assert!(r.zoom_applied);
        assert_eq!(mock.request_count(), 2);
        // Crop is 500x500 at origin (250,250); zoomed (400,400) remaps to
        // 250 + 400/2 = 450 per axis.
        assert_eq!(r.final_point, PixelPoint::new(450, 450));
        assert_eq!(r.final_box, PixelBox::try_new(440, 440, 460, 460).unwrap());
    }

    #[test]
    fn null_first_pass_skips_zoom() {
        let mock = MockBackend::from_script([action_text(0, 0, PixelBox::ZERO)]);
        let p = Pipeline::new(&mock).with_zoom(small_cfg(), ZoomMode::Always);
        let r = p.ground("press ok", &img(1000, 1000)).unwrap();
        assert!(r.is_null());
        assert!(!r.zoom_applied);
        assert_eq!(mock.request_count(), 1);
    }

    #[test]
    fn unparseable_first_pass_is_flagged_null() {
        let mock = MockBackend::from_script(["the button is on the left"]);
        let p = Pipeline::new(&mock);
        let r = p.ground("press ok", &img(100, 100)).unwrap();
        assert!(r.is_null());
        assert!(r.first_parse_error.is_some());
        assert!(r.first_pass.is_none());
        assert_eq!(mock.request_count(), 1);
    }

    #[test]
    fn second_pass_failures_fall_back_to_first() {
        let first = action_text(500, 500, PixelBox::try_new(480, 480, 520, 520).unwrap());
        let mock = MockBackend::from_script([first.clone(), "garbage".to_string()]);
        let p = Pipeline::new(&mock).with_zoom(small_cfg(), ZoomMode::Conditional);
        let r = p.ground("press ok", &img(1000, 1000)).unwrap();
        assert!(r.zoom_applied);
        assert_eq!(r.final_point, PixelPoint::new(500, 500));
        assert_eq!(r.fallbacks, vec![Fallback::SecondParseFailed]);

        let null_second = action_text(0, 0, PixelBox::ZERO);
        let mock = MockBackend::from_script([first, null_second]);
        let p = Pipeline::new(&mock).with_zoom(small_cfg(), ZoomMode::Conditional);
        let r = p.ground("press ok", &img(1000, 1000)).unwrap();
        assert_eq!(r.final_point, PixelPoint::new(500, 500));
        assert_eq!(r.fallbacks, vec![Fallback::SecondNull]);
    }

    #[test]
    fn refiner_output_feeds_grounder_and_failure_falls_back() {
        let refiner = MockBackend::from_script(["click the blue gear icon"]);
        let grounder = MockBackend::from_script([action_text(
            5,
            5,
            PixelBox::try_new(0, 0, 900, 900).unwrap(),
        )]);
        let p = Pipeline::new(&grounder).with_refiner(&refiner);
        let r = p.ground("open settings", &img(1000, 1000)).unwrap();
        assert_eq!(r.refined_instruction.as_deref(), Some("click the blue gear icon"));
        assert_eq!(refiner.request_count(), 1);
        assert!(grounder.requests()[0]
            .user_text
            .ends_with("Task: click the blue gear icon"));

        // Refiner exhausted -> transport error -> original instruction used.
        let empty_refiner = MockBackend::from_script(Vec::<String>::new());
        let grounder = MockBackend::from_script([action_text(
            5,
            5,
            PixelBox::try_new(0, 0, 900, 900).unwrap(),
        )]);
        let p = Pipeline::new(&grounder).with_refiner(&empty_refiner);
        let r = p.ground("open settings", &img(1000, 1000)).unwrap();
        assert_eq!(r.fallbacks, vec![Fallback::RefineFailed]);
        assert!(grounder.requests()[0].user_text.ends_with("Task: open settings"));
    }

    #[test]
    fn never_mode_is_single_pass_and_clamps_final() {
        let mock = MockBackend::from_script([action_text(
            5000,
            5000,
            PixelBox::try_new(0, 0, 50, 50).unwrap(),
        )]);
        let p = Pipeline::new(&mock).with_zoom(small_cfg(), ZoomMode::Never);
        let r = p.ground("press ok", &img(1000, 800)).unwrap();
        assert_eq!(mock.request_count(), 1);
        assert_eq!(r.final_point, PixelPoint::new(999, 799));
    }

    #[test]
    fn grounder_transport_failure_aborts_sample() {
        let mock = MockBackend::from_script(Vec::<String>::new());
        let p = Pipeline::new(&mock);
        assert!(matches!(
            p.ground("press ok", &img(10, 10)),
            Err(PipelineError::Grounder(_))
        ));
    }
}
