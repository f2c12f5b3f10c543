//! Benchmark evaluation: runs the pipeline over a dataset and reports
//! click accuracy per (category x ui_type) cell, with micro and macro
//! averages.
//!
//! A sample is correct when a feasible target receives a final click
//! inside its ground-truth box, or an infeasible target receives the null
//! action. Pipeline errors and unreadable images count as incorrect and
//! carry their reason into the per-sample outcome.
//!
//! Aggregation is associative and commutative, so sharding the run across
//! workers cannot change the report.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use image::DynamicImage;
use zoomground_core::geometry::{point_in_box, PixelBox, PixelPoint};

use crate::dataset::{Sample, UiType};
use crate::pipeline::{Fallback, Pipeline};

/// Resolves a sample's `image_ref` to pixel data.
pub trait ImageProvider: Send + Sync {
    fn load(&self, sample: &Sample) -> Result<DynamicImage, String>;
}

/// Loads images from a directory by filename.
pub struct DirImageProvider {
    pub root: PathBuf,
}

impl ImageProvider for DirImageProvider {
    fn load(&self, sample: &Sample) -> Result<DynamicImage, String> {
        image::open(self.root.join(&sample.image_ref)).map_err(|e| e.to_string())
    }
}

/// In-memory provider for synthetic datasets and tests.
pub struct MapImageProvider {
    pub images: std::collections::HashMap<String, DynamicImage>,
}

impl ImageProvider for MapImageProvider {
    fn load(&self, sample: &Sample) -> Result<DynamicImage, String> {
        self.images
            .get(&sample.image_ref)
            .cloned()
            .ok_or_else(|| format!("no image registered for {}", sample.image_ref))
    }
}

/// Per-sample verdict, persisted as JSON Lines alongside the report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EvalOutcome {
    pub sample_id: usize,
    pub image_ref: String,
    pub correct: bool,
    pub final_point: PixelPoint,
    pub final_box: PixelBox,
    pub zoom_applied: bool,
    pub fallbacks: Vec<Fallback>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct CellStats {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CellReport {
    pub category: String,
    pub ui_type: UiType,
    #[serde(flatten)]
    pub stats: CellStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct FallbackCounts {
    pub refine_failed: usize,
    pub second_parse_failed: usize,
    pub second_null: usize,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EvalReport {
    pub cells: Vec<CellReport>,
    /// Correct samples over all samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_avg: Option<f64>,
    /// Mean of per-cell accuracies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_avg: Option<f64>,
    pub zoom_rate: f64,
    pub fallbacks: FallbackCounts,
    pub total_samples: usize,
    pub total_correct: usize,
    pub wall_time_ms: u64,
}

/// Report plus the ordered per-sample outcomes behind it.
pub struct EvalRun {
    pub report: EvalReport,
    pub outcomes: Vec<EvalOutcome>,
}

fn judge(sample: &Sample, result: &crate::pipeline::GroundingResult) -> bool {
    if sample.infeasible {
        result.is_null()
    } else {
        !result.is_null() && point_in_box(result.final_point, sample.gt_box)
    }
}

/// Evaluates every sample with up to `workers` concurrent threads.
pub fn evaluate(
    samples: &[Sample],
    provider: &dyn ImageProvider,
    pipeline: &Pipeline<'_>,
    workers: usize,
) -> EvalRun {
    let start = Instant::now();
    let workers = workers.max(1).min(samples.len().max(1));
    let cursor = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EvalOutcome>>> = Mutex::new(vec![None; samples.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = samples.get(idx) else {
                    break;
                };
                let outcome = evaluate_one(idx, sample, provider, pipeline);
                slots.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    let outcomes: Vec<EvalOutcome> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every sample evaluated"))
        .collect();
    let report = aggregate(samples, &outcomes, start.elapsed().as_millis() as u64);
    EvalRun { report, outcomes }
}

fn evaluate_one(
    idx: usize,
    sample: &Sample,
    provider: &dyn ImageProvider,
    pipeline: &Pipeline<'_>,
) -> EvalOutcome {
    let incorrect = |error: String| EvalOutcome {
        sample_id: idx,
        image_ref: sample.image_ref.clone(),
        correct: false,
        final_point: PixelPoint::ORIGIN,
        final_box: PixelBox::ZERO,
        zoom_applied: false,
        fallbacks: Vec::new(),
        error: Some(error),
    };
    let image = match provider.load(sample) {
        Ok(img) => img,
        Err(e) => return incorrect(format!("image load failed: {e}")),
    };
    match pipeline.ground(&sample.instruction, &image) {
        Ok(result) => EvalOutcome {
            sample_id: idx,
            image_ref: sample.image_ref.clone(),
            correct: judge(sample, &result),
            final_point: result.final_point,
            final_box: result.final_box,
            zoom_applied: result.zoom_applied,
            fallbacks: result.fallbacks,
            error: None,
        },
        Err(e) => incorrect(e.to_string()),
    }
}

fn aggregate(samples: &[Sample], outcomes: &[EvalOutcome], wall_time_ms: u64) -> EvalReport {
    let mut cells: BTreeMap<(String, UiType), (usize, usize)> = BTreeMap::new();
    let mut fallbacks = FallbackCounts::default();
    let mut zoomed = 0usize;
    let mut total_correct = 0usize;

    for (sample, outcome) in samples.iter().zip(outcomes) {
        let cell = cells
            .entry((sample.category.clone(), sample.ui_type))
            .or_default();
        cell.0 += 1;
        if outcome.correct {
            cell.1 += 1;
            total_correct += 1;
        }
        if outcome.zoom_applied {
            zoomed += 1;
        }
        for f in &outcome.fallbacks {
            match f {
                Fallback::RefineFailed => fallbacks.refine_failed += 1,
                Fallback::SecondParseFailed => fallbacks.second_parse_failed += 1,
                Fallback::SecondNull => fallbacks.second_null += 1,
            }
        }
    }

    let cells: Vec<CellReport> = cells
        .into_iter()
        .map(|((category, ui_type), (n, correct))| CellReport {
            category,
            ui_type,
            stats: CellStats {
                n,
                correct,
                accuracy: correct as f64 / n as f64,
            },
        })
        .collect();

    let total = samples.len();
    EvalReport {
        micro_avg: (total > 0).then(|| total_correct as f64 / total as f64),
        macro_avg: (!cells.is_empty())
            .then(|| cells.iter().map(|c| c.stats.accuracy).sum::<f64>() / cells.len() as f64),
        zoom_rate: if total > 0 {
            zoomed as f64 / total as f64
        } else {
            0.0
        },
        fallbacks,
        total_samples: total,
        total_correct,
        wall_time_ms,
        cells,
    }
}

fn fmt_fraction(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row per cell: `category,ui_type,n,correct,accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,ui_type,n,correct,accuracy\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.category,
                c.ui_type,
                c.stats.n,
                c.stats.correct,
                fmt_fraction(c.stats.accuracy)
            ));
        }
        out
    }

    /// Aligned table with Text and Icon columns per category and the
    /// average last, plus the summary lines.
    pub fn to_text(&self) -> String {
        // Conventional benchmark domain order first, anything else after.
        const PREFERRED: [&str; 6] = ["Development", "Creative", "CAD", "Scientific", "Office", "OS"];
        let mut categories: Vec<String> = Vec::new();
        for p in PREFERRED {
            if self.cells.iter().any(|c| c.category == p) {
                categories.push(p.to_string());
            }
        }
        for c in &self.cells {
            if !categories.contains(&c.category) {
                categories.push(c.category.clone());
            }
        }

        let cell = |cat: &str, ui: UiType| {
            self.cells
                .iter()
                .find(|c| c.category == cat && c.ui_type == ui)
                .map(|c| format!("{:.1}", c.stats.accuracy * 100.0))
                .unwrap_or_else(|| "-".to_string())
        };

        let mut header: Vec<String> = Vec::new();
        let mut row: Vec<String> = Vec::new();
        for cat in &categories {
            header.push(format!("{cat}/Text"));
            header.push(format!("{cat}/Icon"));
            row.push(cell(cat, UiType::Text));
            row.push(cell(cat, UiType::Icon));
        }
        header.push("Avg.".to_string());
        row.push(
            self.micro_avg
                .map(|v| format!("{:.1}", v * 100.0))
                .unwrap_or_else(|| "-".to_string()),
        );

        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.len().max(r.len()))
            .collect();
        let line = |cols: &[String]| {
            cols.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };

        let mut out = String::new();
        out.push_str(&line(&header));
        out.push('\n');
        out.push_str(&line(&row));
        out.push('\n');
        if let Some(micro) = self.micro_avg {
            out.push_str(&format!("micro average: {micro:.4}\n"));
        }
        if let Some(macro_avg) = self.macro_avg {
            out.push_str(&format!("macro average: {macro_avg:.4}\n"));
        }
        out.push_str(&format!(
            "zoom rate: {:.4}  samples: {}  correct: {}\n",
            self.zoom_rate, self.total_samples, self.total_correct
        ));
        out
    }
}

/// Serializes outcomes as JSON Lines.
pub fn outcomes_to_jsonl(outcomes: &[EvalOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&serde_json::to_string(o).expect("outcome serializes"));
        out.push('\n');
    }
    out
}
