//! Reward computation for grounding-model training.
//!
//! The total reward blends a point reward and a bounding-box reward:
//! `R = lambda * R_point + (1 - lambda) * R_bbox` with `0 <= lambda <= 1`.
//! Each side pairs a binary format reward (strict-mode parse of its wire
//! segment) with a content reward: point-in-box membership for the click,
//! IoU against the ground truth for the box.
//!
//! Format gates content multiplicatively by default, so an ill-formatted
//! answer earns nothing; an additive split is available for trainer
//! experimentation via [`CombineMode`].

use crate::action::{strict_box_suffix, strict_click_prefix};
use crate::geometry::{iou, point_in_box, PixelBox};

/// Blend weight `lambda` between the point and box rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "f64", into = "f64"))]
pub struct RewardWeights {
    lambda: f64,
}

impl TryFrom<f64> for RewardWeights {
    type Error = LambdaRangeError;

    fn try_from(lambda: f64) -> Result<Self, LambdaRangeError> {
        RewardWeights::try_new(lambda)
    }
}

impl From<RewardWeights> for f64 {
    fn from(w: RewardWeights) -> f64 {
        w.lambda
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LambdaRangeError;

impl core::fmt::Display for LambdaRangeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("lambda must lie in [0, 1]")
    }
}

impl RewardWeights {
    pub fn try_new(lambda: f64) -> Result<Self, LambdaRangeError> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(RewardWeights { lambda })
        } else {
            Err(LambdaRangeError)
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for RewardWeights {
    /// The symmetric blend. A configuration default, not a reported value.
    fn default() -> Self {
        RewardWeights { lambda: 0.5 }
    }
}

/// How the format reward combines with its content reward inside each side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CombineMode {
    /// `r = format * content`; a format violation zeroes the side.
    #[default]
    Gated,
    /// `r = (format + content) / 2`; format alone still earns half credit.
    Additive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub combine: CombineMode,
}

/// All reward components for one response.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardBreakdown {
    pub format_point: f64,
    pub point_in_box: f64,
    pub format_bbox: f64,
    pub iou: f64,
    pub r_point: f64,
    pub r_bbox: f64,
    pub total: f64,
}

/// 1 iff the response starts with a canonical click segment with valid
/// non-negative coordinates.
pub fn format_reward_point(text: &str) -> u8 {
    strict_click_prefix(text).is_some() as u8
}

/// 1 iff the response ends with a canonical `<|box_start|>...<|box_end|>`
/// segment with ordered corners.
pub fn format_reward_bbox(text: &str) -> u8 {
    strict_box_suffix(text).is_some() as u8
}

/// Scores one raw response against the ground-truth box. Parse failures
/// never error; they surface as zero components.
pub fn compute_reward(text: &str, gt_box: PixelBox, cfg: RewardConfig) -> RewardBreakdown {
    let point = strict_click_prefix(text).map(|(_, p)| p);
    let bbox = strict_box_suffix(text);

    let format_point = point.is_some() as u8 as f64;
    let format_bbox = bbox.is_some() as u8 as f64;
    let pib = point.map_or(0.0, |p| point_in_box(p, gt_box) as u8 as f64);
    let iou_val = bbox.map_or(0.0, |b| iou(b, gt_box));

    let side = |format: f64, content: f64| match cfg.combine {
        CombineMode::Gated => format * content,
        CombineMode::Additive => 0.5 * (format + content),
    };
    let r_point = side(format_point, pib);
    let r_bbox = side(format_bbox, iou_val);
    let lambda = cfg.weights.lambda();

    RewardBreakdown {
        format_point,
        point_in_box: pib,
        format_bbox,
        iou: iou_val,
        r_point,
        r_bbox,
        total: lambda * r_point + (1.0 - lambda) * r_bbox,
    }
}
