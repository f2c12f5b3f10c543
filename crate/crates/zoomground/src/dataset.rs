//! Annotation ingestion (JSON Lines) and the two augmentation channels:
//! geometric padding/resizing with exact box remapping, and LLM-driven
//! instruction variation.
//!
//! The canonical annotation line is
//! `{"img_filename": ..., "instruction": ..., "bbox": [x1,y1,x2,y2],
//! "group": ..., "ui_type": "text"|"icon"}` with an optional
//! `"infeasible": true` whose ground-truth box must be all-zero. The field
//! names match the de-facto ScreenSpot annotation shape so public
//! benchmarks ingest with a thin mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use image::DynamicImage;
use zoomground_core::geometry::{ImageSize, PixelBox};

use crate::client::{Backend, PromptBundle};
use crate::imageops::pad_and_resize;

/// UI element class of a benchmark cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UiType {
    Text,
    Icon,
}

impl fmt::Display for UiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UiType::Text => f.write_str("text"),
            UiType::Icon => f.write_str("icon"),
        }
    }
}

/// One annotated benchmark or training sample.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Sample {
    pub image_ref: String,
    pub instruction: String,
    pub gt_box: PixelBox,
    pub category: String,
    pub ui_type: UiType,
    pub infeasible: bool,
}

#[derive(Debug, serde::Deserialize)]
struct RawRecord {
    img_filename: String,
    instruction: String,
    bbox: [i64; 4],
    group: String,
    ui_type: UiType,
    #[serde(default)]
    infeasible: bool,
}

#[derive(Debug, serde::Serialize)]
struct RawRecordOut<'a> {
    img_filename: &'a str,
    instruction: &'a str,
    bbox: [i64; 4],
    group: &'a str,
    ui_type: UiType,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    infeasible: bool,
}

/// Per-line validation failure; loading continues past it.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Loaded samples plus every per-line error, in input order.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub samples: Vec<Sample>,
    pub errors: Vec<LineError>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("augmented box degenerate after remap: {0:?}")]
    DegenerateBox(PixelBox),
    #[error("invalid augment spec: {0}")]
    InvalidSpec(String),
}

fn sample_from_record(rec: RawRecord) -> Result<Sample, String> {
    let [x1, y1, x2, y2] = rec.bbox;
    let gt_box = PixelBox::try_new(x1, y1, x2, y2).map_err(|e| e.to_string())?;
    if x1 < 0 || y1 < 0 {
        return Err(format!("negative box coordinates: {:?}", rec.bbox));
    }
    if rec.infeasible && !gt_box.is_zero() {
        return Err("infeasible sample must carry the all-zero box".to_string());
    }
    if rec.group.is_empty() {
        return Err("empty group".to_string());
    }
    Ok(Sample {
        image_ref: rec.img_filename,
        instruction: rec.instruction,
        gt_box,
        category: rec.group,
        ui_type: rec.ui_type,
        // The all-zero box is the null target whether or not it is flagged.
        infeasible: rec.infeasible || gt_box.is_zero(),
    })
}

/// Loads a JSON Lines annotation file, collecting per-line errors instead
/// of failing the file. Order-preserving; blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LoadReport, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    let mut report = LoadReport::default();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(sample_from_record);
        match parsed {
            Ok(sample) => report.samples.push(sample),
            Err(message) => report.errors.push(LineError {
                line: line_no,
                message,
            }),
        }
    }
    Ok(report)
}

/// Writes samples back out in the canonical JSON Lines shape.
pub fn write_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        let rec = RawRecordOut {
            img_filename: &s.image_ref,
            instruction: &s.instruction,
            bbox: [s.gt_box.x1, s.gt_box.y1, s.gt_box.x2, s.gt_box.y2],
            group: &s.category,
            ui_type: s.ui_type,
            infeasible: s.infeasible,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Geometric augmentation: constant-black padding per side, then an
/// optional resize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GeometricAugmentSpec {
    /// Padding in pixels: left, top, right, bottom.
    pub pad: [u32; 4],
    /// Final size after padding; `None` keeps the padded size.
    pub target_size: Option<ImageSize>,
}

impl GeometricAugmentSpec {
    pub const IDENTITY: GeometricAugmentSpec = GeometricAugmentSpec {
        pad: [0, 0, 0, 0],
        target_size: None,
    };

    fn padded_size(&self, base: ImageSize) -> ImageSize {
        let [l, t, r, b] = self.pad;
        ImageSize {
            width: base.width + l + r,
            height: base.height + t + b,
        }
    }

    /// Maps a box from base-image coordinates into augmented coordinates:
    /// translate by the top-left pads, then scale to the target size with
    /// round-half-up per coordinate.
    pub fn map_box(&self, b: PixelBox, base: ImageSize) -> PixelBox {
        let [l, t, ..] = self.pad;
        let padded = self.padded_size(base);
        let shifted = PixelBox {
            x1: b.x1 + l as i64,
            y1: b.y1 + t as i64,
            x2: b.x2 + l as i64,
            y2: b.y2 + t as i64,
        };
        match self.target_size {
            None => shifted,
            Some(target) => PixelBox {
                x1: scale_round(shifted.x1, target.width, padded.width),
                y1: scale_round(shifted.y1, target.height, padded.height),
                x2: scale_round(shifted.x2, target.width, padded.width),
                y2: scale_round(shifted.y2, target.height, padded.height),
            },
        }
    }

    /// Inverse of [`map_box`]: augmented coordinates back to the base
    /// image, exact up to the forward rounding.
    pub fn invert_box(&self, b: PixelBox, base: ImageSize) -> PixelBox {
        let [l, t, ..] = self.pad;
        let padded = self.padded_size(base);
        let unscaled = match self.target_size {
            None => b,
            Some(target) => PixelBox {
                x1: scale_round(b.x1, padded.width, target.width),
                y1: scale_round(b.y1, padded.height, target.height),
                x2: scale_round(b.x2, padded.width, target.width),
                y2: scale_round(b.y2, padded.height, target.height),
            },
        };
        PixelBox {
            x1: unscaled.x1 - l as i64,
            y1: unscaled.y1 - t as i64,
            x2: unscaled.x2 - l as i64,
            y2: unscaled.y2 - t as i64,
        }
    }
}

/// Round-half-up of `v * num / den` for non-negative `v`.
fn scale_round(v: i64, num: u32, den: u32) -> i64 {
    debug_assert!(v >= 0);
    ((2 * v as u64 * num as u64 + den as u64) / (2 * den as u64)) as i64
}

/// Applies one geometric augmentation to a sample and its image. The
/// instruction is unchanged; the ground-truth box is remapped exactly. A
/// non-infeasible box that collapses to zero area is rejected.
pub fn augment_geometry(
    sample: &Sample,
    image: &DynamicImage,
    spec: &GeometricAugmentSpec,
) -> Result<(Sample, DynamicImage), DatasetError> {
    if let Some(t) = spec.target_size {
        if t.width == 0 || t.height == 0 {
            return Err(DatasetError::InvalidSpec("target size must be positive".into()));
        }
    }
    let base = ImageSize::try_new(image.width(), image.height())
        .map_err(|_| DatasetError::InvalidSpec("source image has a zero dimension".into()))?;
    let out_image = pad_and_resize(image, spec.pad, spec.target_size);
    let gt_box = if sample.infeasible {
        sample.gt_box
    } else {
        let mapped = spec.map_box(sample.gt_box, base);
        if mapped.area() <= 0.0 {
            return Err(DatasetError::DegenerateBox(mapped));
        }
        mapped
    };
    Ok((
        Sample {
            gt_box,
            ..sample.clone()
        },
        out_image,
    ))
}

/// Instruction variation channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    WithLocation,
    WithoutLocation,
    Intention,
    Contextual,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::WithLocation,
        VariantKind::WithoutLocation,
        VariantKind::Intention,
        VariantKind::Contextual,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::WithLocation => "with_location",
            VariantKind::WithoutLocation => "without_location",
            VariantKind::Intention => "intention",
            VariantKind::Contextual => "contextual",
        }
    }
}

impl std::str::FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown variant kind `{s}`"))
    }
}

/// One rewriting prompt per variant kind. Templates use `{instruction}`
/// as the placeholder and live in configuration, not code paths.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct VariantTemplates {
    pub templates: BTreeMap<VariantKind, String>,
}

impl Default for VariantTemplates {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(
            VariantKind::WithLocation,
            "Rewrite the following GUI instruction so it mentions where the target element is on the screen. Reply with the rewritten instruction only.\nInstruction: {instruction}".to_string(),
        );
        templates.insert(
            VariantKind::WithoutLocation,
            "Rewrite the following GUI instruction without any location description, keeping the same target element. Reply with the rewritten instruction only.\nInstruction: {instruction}".to_string(),
        );
        templates.insert(
            VariantKind::Intention,
            "Rewrite the following GUI instruction as the user's underlying intention rather than a direct command. Reply with the rewritten instruction only.\nInstruction: {instruction}".to_string(),
        );
        templates.insert(
            VariantKind::Contextual,
            "Rewrite the following GUI instruction adding plausible contextual information about the application state. Reply with the rewritten instruction only.\nInstruction: {instruction}".to_string(),
        );
        VariantTemplates { templates }
    }
}

/// One instruction variant together with the instruction it came from.
#[derive(Clone, Debug, serde::Serialize)]
pub struct InstructionVariant {
    pub sample: Sample,
    /// `None` marks the original passthrough (empty kinds or backend
    /// failure).
    pub kind: Option<VariantKind>,
    pub source_instruction: String,
    /// True when a requested variant could not be generated and the
    /// original sample was passed through instead.
    pub fallback: bool,
}

/// Generates one sample per requested variant kind by prompting a
/// rewriting model. Backend failure passes the original sample through
/// unaugmented with `fallback` set; empty `kinds` yields the original
/// only.
pub fn augment_instruction(
    sample: &Sample,
    backend: &dyn Backend,
    image: &DynamicImage,
    kinds: &[VariantKind],
    templates: &VariantTemplates,
) -> Vec<InstructionVariant> {
    if kinds.is_empty() {
        return vec![InstructionVariant {
            sample: sample.clone(),
            kind: None,
            source_instruction: sample.instruction.clone(),
            fallback: false,
        }];
    }
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let Some(template) = templates.templates.get(kind) else {
            continue;
        };
        let bundle = PromptBundle {
            system_text: zoomground_core::prompt::REFINEMENT_SYSTEM_PROMPT.to_string(),
            user_text: template.replace("{instruction}", &sample.instruction),
            image: image.clone(),
        };
        let completion = backend.complete(&bundle);
        match completion {
            Ok(c) if !c.text.trim().is_empty() => out.push(InstructionVariant {
                sample: Sample {
                    instruction: c.text.trim().to_string(),
                    ..sample.clone()
                },
                kind: Some(*kind),
                source_instruction: sample.instruction.clone(),
                fallback: false,
            }),
            _ => out.push(InstructionVariant {
                sample: sample.clone(),
                kind: Some(*kind),
                source_instruction: sample.instruction.clone(),
                fallback: true,
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::MockBackend;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_valid_lines_in_order() {
        let f = write_lines(&[
            r#"{"img_filename":"a.png","instruction":"click save","bbox":[10,20,110,70],"group":"Office","ui_type":"text"}"#,
            r#"{"img_filename":"b.png","instruction":"none","bbox":[0,0,0,0],"group":"OS","ui_type":"icon","infeasible":true}"#,
        ]);
        let report = load_dataset(f.path()).unwrap();
        assert!(report.errors.is_empty());
        assert_eq!(report.samples.len(), 2);
        assert_eq!(report.samples[0].gt_box, PixelBox::try_new(10, 20, 110, 70).unwrap());
        assert!(!report.samples[0].infeasible);
        assert!(report.samples[1].infeasible);
        assert!(report.samples[1].gt_box.is_zero());
    }

    #[test]
    fn corner_order_violation_is_a_line_error() {
        let f = write_lines(&[
            r#"{"img_filename":"a.png","instruction":"x","bbox":[110,20,10,70],"group":"Office","ui_type":"text"}"#,
            r#"{"img_filename":"b.png","instruction":"y","bbox":[0,0,5,5],"group":"Office","ui_type":"icon"}"#,
        ]);
        let report = load_dataset(f.path()).unwrap();
        assert_eq!(report.samples.len(), 1);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line, 1);
    }

    #[test]
    fn unreadable_file_is_a_file_level_error() {
        assert!(matches!(
            load_dataset("/nonexistent/xyz.jsonl"),
            Err(DatasetError::Unreadable { .. })
        ));
    }

    #[test]
    fn dataset_round_trips_through_writer() {
        let f = write_lines(&[
            r#"{"img_filename":"a.png","instruction":"click save","bbox":[10,20,110,70],"group":"Office","ui_type":"text"}"#,
        ]);
        let loaded = load_dataset(f.path()).unwrap().samples;
        let out = tempfile::NamedTempFile::new().unwrap();
        write_dataset(out.path(), &loaded).unwrap();
        let reloaded = load_dataset(out.path()).unwrap().samples;
        assert_eq!(loaded, reloaded);
    }

    fn sample(bbox: PixelBox) -> Sample {
        Sample {
            image_ref: "a.png".into(),
            instruction: "click save".into(),
            gt_box: bbox,
            category: "Office".into(),
            ui_type: UiType::Text,
            infeasible: false,
        }
    }

    #[test]
    fn identity_spec_is_identity() {
        let img = DynamicImage::new_rgb8(200, 150);
        let s = sample(PixelBox::try_new(10, 20, 110, 70).unwrap());
        let (out, out_img) = augment_geometry(&s, &img, &GeometricAugmentSpec::IDENTITY).unwrap();
        assert_eq!(out, s);
        assert_eq!((out_img.width(), out_img.height()), (200, 150));
    }

    #[test]
    fn pure_translation_by_pads() {
        let img = DynamicImage::new_rgb8(300, 200);
        let s = sample(PixelBox::try_new(10, 20, 110, 70).unwrap());
        let spec = GeometricAugmentSpec {
            pad: [100, 50, 0, 0],
            target_size: None,
        };
        let (out, out_img) = augment_geometry(&s, &img, &spec).unwrap();
        assert_eq!(out.gt_box, PixelBox::try_new(110, 70, 210, 120).unwrap());
        assert_eq!((out_img.width(), out_img.height()), (400, 250));
    }

    #[test]
    fn resize_scales_each_corner() {
        let img = DynamicImage::new_rgb8(2000, 1000);
        let s = sample(PixelBox::try_new(100, 100, 300, 200).unwrap());
        let spec = GeometricAugmentSpec {
            pad: [0, 0, 0, 0],
            target_size: Some(ImageSize::try_new(1000, 500).unwrap()),
        };
        let (out, out_img) = augment_geometry(&s, &img, &spec).unwrap();
        assert_eq!(out.gt_box, PixelBox::try_new(50, 50, 150, 100).unwrap());
        assert_eq!((out_img.width(), out_img.height()), (1000, 500));
    }

    #[test]
    fn degenerate_after_scaling_is_rejected() {
        let img = DynamicImage::new_rgb8(1000, 1000);
        let s = sample(PixelBox::try_new(100, 100, 101, 101).unwrap());
        let spec = GeometricAugmentSpec {
            pad: [0, 0, 0, 0],
            target_size: Some(ImageSize::try_new(100, 100).unwrap()),
        };
        assert!(matches!(
            augment_geometry(&s, &img, &spec),
            Err(DatasetError::DegenerateBox(_))
        ));
    }

    #[test]
    fn center_point_stays_inside_transformed_box() {
        let img = DynamicImage::new_rgb8(800, 600);
        let s = sample(PixelBox::try_new(120, 80, 360, 240).unwrap());
        let spec = GeometricAugmentSpec {
            pad: [37, 11, 5, 23],
            target_size: Some(ImageSize::try_new(421, 333).unwrap()),
        };
        let base = ImageSize::try_new(800, 600).unwrap();
        let (out, _) = augment_geometry(&s, &img, &spec).unwrap();
        let center = PixelBox {
            x1: (s.gt_box.x1 + s.gt_box.x2) / 2,
            y1: (s.gt_box.y1 + s.gt_box.y2) / 2,
            x2: (s.gt_box.x1 + s.gt_box.x2) / 2,
            y2: (s.gt_box.y1 + s.gt_box.y2) / 2,
        };
        let mapped_center = spec.map_box(center, base);
        assert!(mapped_center.x1 >= out.gt_box.x1 && mapped_center.x1 <= out.gt_box.x2);
        assert!(mapped_center.y1 >= out.gt_box.y1 && mapped_center.y1 <= out.gt_box.y2);
    }

    #[test]
    fn empty_kinds_pass_original_through() {
        let backend = MockBackend::from_script(Vec::<String>::new());
        let img = DynamicImage::new_rgb8(10, 10);
        let s = sample(PixelBox::try_new(1, 1, 5, 5).unwrap());
        let out = augment_instruction(&s, &backend, &img, &[], &VariantTemplates::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, None);
        assert_eq!(out[0].sample, s);
        assert_eq!(backend.request_count(), 0);
    }

    #[test]
    fn one_variant_per_kind_from_scripted_backend() {
        let backend = MockBackend::with_handler(|_, n| format!("variant {n}"));
        let img = DynamicImage::new_rgb8(10, 10);
        let s = sample(PixelBox::try_new(1, 1, 5, 5).unwrap());
        let kinds = [VariantKind::WithLocation, VariantKind::Intention];
        let out = augment_instruction(&s, &backend, &img, &kinds, &VariantTemplates::default());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].kind, Some(VariantKind::WithLocation));
        assert_eq!(out[0].sample.instruction, "variant 0");
        assert_eq!(out[0].sample.gt_box, s.gt_box);
        assert_eq!(out[0].source_instruction, "click save");
        assert!(!out[0].fallback);
    }

    #[test]
    fn backend_failure_passes_original_with_fallback_flag() {
        let backend = MockBackend::from_script(Vec::<String>::new());
        let img = DynamicImage::new_rgb8(10, 10);
        let s = sample(PixelBox::try_new(1, 1, 5, 5).unwrap());
        let out = augment_instruction(
            &s,
            &backend,
            &img,
            &[VariantKind::Contextual],
            &VariantTemplates::default(),
        );
        assert_eq!(out.len(), 1);
        assert!(out[0].fallback);
        assert_eq!(out[0].sample.instruction, "click save");
    }
}
