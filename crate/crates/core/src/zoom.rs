//! Conditional zoom-in: the small-element trigger, crop-window placement
//! around the click-point, and exact coordinate remapping between zoomed
//! and original spaces.
//!
//! The trigger fires when the predicted box is small on one side and not
//! oversized on the other:
//!
//! ```text
//! (w <= alpha && h <= beta) || (h <= alpha && w <= beta),  alpha < beta
//! ```
//!
//! The crop window is `(floor(W/r), floor(H/r))`, centered on the click and
//! translated (never shrunk) to stay inside the image, then resized back to
//! the original resolution for the second pass. Remapping is integer math
//! throughout so it is exact and deterministic.

use crate::geometry::{box_dims, ImageSize, PixelBox, PixelPoint};

/// Zoom trigger thresholds and the linear zoom factor.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZoomConfig {
    /// Smaller threshold (px, original-image units).
    pub alpha: i64,
    /// Larger threshold (px, original-image units).
    pub beta: i64,
    /// Linear zoom factor `r > 1`; the crop is `1/r` of the image per axis.
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZoomConfigError {
    ThresholdOrder,
    RatioRange,
}

impl core::fmt::Display for ZoomConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ZoomConfigError::ThresholdOrder => f.write_str("thresholds must satisfy 0 < alpha < beta"),
            ZoomConfigError::RatioRange => f.write_str("zoom ratio must be > 1"),
        }
    }
}

impl ZoomConfig {
    pub fn try_new(alpha: i64, beta: i64, ratio: f64) -> Result<Self, ZoomConfigError> {
        if !(0 < alpha && alpha < beta) {
            Err(ZoomConfigError::ThresholdOrder)
        } else if !(ratio > 1.0) {
            Err(ZoomConfigError::RatioRange)
        } else {
            Ok(ZoomConfig { alpha, beta, ratio })
        }
    }
}

impl Default for ZoomConfig {
    /// Defaults sized so typical icons and text on 2-4K screenshots
    /// trigger the zoom. Configuration defaults, not reported values.
    fn default() -> Self {
        ZoomConfig {
            alpha: 100,
            beta: 300,
            ratio: 2.0,
        }
    }
}

/// Whether the predicted box is small enough to warrant a second pass.
///
/// The null box returns false: a null action carries no click-point to
/// zoom around, so the pipeline exempts it here rather than upstream.
/// Any other degenerate box (zero width or height) still triggers, per the
/// formula.
pub fn should_zoom(bbox: PixelBox, cfg: &ZoomConfig) -> bool {
    if bbox.is_zero() {
        return false;
    }
    let (w, h) = box_dims(bbox);
    (w <= cfg.alpha && h <= cfg.beta) || (h <= cfg.alpha && w <= cfg.beta)
}

/// Crop window in original space plus the scale back up to the original
/// resolution. `scale_x = output.width / crop.width`, likewise for y.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZoomTransform {
    pub crop_origin: PixelPoint,
    pub crop_size: ImageSize,
    pub output_size: ImageSize,
}

impl ZoomTransform {
    pub fn scale_x(&self) -> f64 {
        self.output_size.width as f64 / self.crop_size.width as f64
    }

    pub fn scale_y(&self) -> f64 {
        self.output_size.height as f64 / self.crop_size.height as f64
    }

    /// The crop window as a box in original-image coordinates.
    pub fn crop_box(&self) -> PixelBox {
        PixelBox {
            x1: self.crop_origin.x as i64,
            y1: self.crop_origin.y as i64,
            x2: self.crop_origin.x as i64 + self.crop_size.width as i64,
            y2: self.crop_origin.y as i64 + self.crop_size.height as i64,
        }
    }
}

/// Builds the zoom window for a first-pass click. The crop is
/// `(floor(W/r), floor(H/r))`, centered on the click (clamped into the
/// image) and translated to fit, so the crop size is invariant; the output
/// size is the original image size.
pub fn compute_zoom_window(click: PixelPoint, img: ImageSize, cfg: &ZoomConfig) -> ZoomTransform {
    // `as` truncation equals floor for positive values.
    let crop_w = ((img.width as f64 / cfg.ratio) as u32).max(1);
    let crop_h = ((img.height as f64 / cfg.ratio) as u32).max(1);
    let cx = click.x.min(img.width - 1);
    let cy = click.y.min(img.height - 1);
    let origin_x = (cx as i64 - (crop_w / 2) as i64).clamp(0, (img.width - crop_w) as i64) as u32;
    let origin_y = (cy as i64 - (crop_h / 2) as i64).clamp(0, (img.height - crop_h) as i64) as u32;
    ZoomTransform {
        crop_origin: PixelPoint::new(origin_x, origin_y),
        crop_size: ImageSize {
            width: crop_w,
            height: crop_h,
        },
        output_size: img,
    }
}

/// Round-half-up of `num / den` for non-negative integers.
fn div_round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

fn map_coord(v: u32, origin: u32, crop: u32, output: u32) -> u64 {
    // v / scale = v * crop / output, rounded half-up.
    origin as u64 + div_round_half_up(v as u64 * crop as u64, output as u64)
}

/// Maps a second-pass point (zoomed space) back to original coordinates,
/// clamped to addressable pixels.
pub fn map_point_to_original(p: PixelPoint, t: &ZoomTransform) -> PixelPoint {
    let x = map_coord(p.x, t.crop_origin.x, t.crop_size.width, t.output_size.width)
        .min((t.output_size.width - 1) as u64);
    let y = map_coord(p.y, t.crop_origin.y, t.crop_size.height, t.output_size.height)
        .min((t.output_size.height - 1) as u64);
    PixelPoint::new(x as u32, y as u32)
}

/// Corner-wise remap of a second-pass box into original coordinates. Box
/// corners may touch the image edge, so they clamp to `[0, W] x [0, H]`
/// rather than to addressable pixels.
pub fn map_box_to_original(b: PixelBox, t: &ZoomTransform) -> PixelBox {
    let mx = |v: i64| {
        map_coord(
            v.clamp(0, u32::MAX as i64) as u32,
            t.crop_origin.x,
            t.crop_size.width,
            t.output_size.width,
        )
        .min(t.output_size.width as u64) as i64
    };
    let my = |v: i64| {
        map_coord(
            v.clamp(0, u32::MAX as i64) as u32,
            t.crop_origin.y,
            t.crop_size.height,
            t.output_size.height,
        )
        .min(t.output_size.height as u64) as i64
    };
    PixelBox::from_corners_normalized(mx(b.x1), my(b.y1), mx(b.x2), my(b.y2))
}

/// Forward map of an original-space point into zoomed coordinates; the
/// inverse of [`map_point_to_original`] up to rounding. Exposed for tests
/// and debug overlays.
pub fn map_point_to_zoomed(p: PixelPoint, t: &ZoomTransform) -> PixelPoint {
    let fx = ((p.x.saturating_sub(t.crop_origin.x)) as u64 * t.output_size.width as u64)
        / t.crop_size.width as u64;
    let fy = ((p.y.saturating_sub(t.crop_origin.y)) as u64 * t.output_size.height as u64)
        / t.crop_size.height as u64;
    PixelPoint::new(
        (fx.min((t.output_size.width - 1) as u64)) as u32,
        (fy.min((t.output_size.height - 1) as u64)) as u32,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxed(w: i64, h: i64) -> PixelBox {
        PixelBox::try_new(10, 10, 10 + w, 10 + h).unwrap()
    }

    #[test]
    fn zoom_trigger_examples() {
        let cfg = ZoomConfig::default();
        assert!(should_zoom(boxed(80, 200), &cfg));
        assert!(should_zoom(boxed(250, 80), &cfg));
        assert!(!should_zoom(boxed(150, 150), &cfg));
        assert!(!should_zoom(PixelBox::ZERO, &cfg));
        // Degenerate but non-null boxes still satisfy the formula.
        assert!(should_zoom(PixelBox::try_new(10, 10, 10, 10).unwrap(), &cfg));
    }

    #[test]
    fn zoom_window_examples() {
        let img = ImageSize::try_new(1920, 1080).unwrap();
        let cfg = ZoomConfig::default();
        let t = compute_zoom_window(PixelPoint::new(960, 540), img, &cfg);
        assert_eq!(t.crop_origin, PixelPoint::new(480, 270));
        assert_eq!(t.crop_size, ImageSize::try_new(960, 540).unwrap());
        assert_eq!(t.scale_x(), 2.0);
        assert_eq!(t.scale_y(), 2.0);

        let t = compute_zoom_window(PixelPoint::new(10, 10), img, &cfg);
        assert_eq!(t.crop_origin, PixelPoint::new(0, 0));
        assert_eq!(t.crop_size, ImageSize::try_new(960, 540).unwrap());

        let t = compute_zoom_window(PixelPoint::new(1919, 540), img, &cfg);
        assert_eq!(t.crop_origin, PixelPoint::new(960, 270));
    }

    #[test]
    fn point_remap_examples() {
        let t = ZoomTransform {
            crop_origin: PixelPoint::new(100, 200),
            crop_size: ImageSize::try_new(960, 540).unwrap(),
            output_size: ImageSize::try_new(1920, 1080).unwrap(),
        };
        assert_eq!(map_point_to_original(PixelPoint::new(0, 0), &t), PixelPoint::new(100, 200));
        assert_eq!(
            map_point_to_original(PixelPoint::new(50, 60), &t),
            PixelPoint::new(125, 230)
        );

        let id = ZoomTransform {
            crop_origin: PixelPoint::ORIGIN,
            crop_size: ImageSize::try_new(1920, 1080).unwrap(),
            output_size: ImageSize::try_new(1920, 1080).unwrap(),
        };
        assert_eq!(
            map_point_to_original(PixelPoint::new(7, 11), &id),
            PixelPoint::new(7, 11)
        );
    }

    #[test]
    fn box_remap_examples() {
        let id = ZoomTransform {
            crop_origin: PixelPoint::ORIGIN,
            crop_size: ImageSize::try_new(100, 100).unwrap(),
            output_size: ImageSize::try_new(100, 100).unwrap(),
        };
        assert_eq!(map_box_to_original(PixelBox::ZERO, &id), PixelBox::ZERO);

        let t = ZoomTransform {
            crop_origin: PixelPoint::new(100, 100),
            crop_size: ImageSize::try_new(500, 500).unwrap(),
            output_size: ImageSize::try_new(1000, 1000).unwrap(),
        };
        assert_eq!(
            map_box_to_original(PixelBox::try_new(10, 10, 20, 20).unwrap(), &t),
            PixelBox::try_new(105, 105, 110, 110).unwrap()
        );
        // The full zoomed frame maps back onto the crop window.
        let frame = PixelBox::try_new(0, 0, 1000, 1000).unwrap();
        assert_eq!(map_box_to_original(frame, &t), t.crop_box());
    }

    proptest! {
        #[test]
        fn trigger_symmetric_in_w_h(w in 0i64..=600, h in 0i64..=600) {
            let cfg = ZoomConfig::default();
            prop_assert_eq!(should_zoom(boxed(w, h), &cfg), should_zoom(boxed(h, w), &cfg));
        }

        #[test]
        fn crop_window_in_bounds_exact_size(
            cx in 0u32..4000, cy in 0u32..4000,
            w in 2u32..4000, h in 2u32..4000,
            r in prop::sample::select(alloc::vec![1.5f64, 2.0, 3.0]),
        ) {
            let img = ImageSize::try_new(w, h).unwrap();
            let cfg = ZoomConfig { ratio: r, ..ZoomConfig::default() };
            let t = compute_zoom_window(PixelPoint::new(cx, cy), img, &cfg);
            prop_assert_eq!(t.crop_size.width, ((w as f64 / r) as u32).max(1));
            prop_assert_eq!(t.crop_size.height, ((h as f64 / r) as u32).max(1));
            prop_assert!(t.crop_origin.x + t.crop_size.width <= w);
            prop_assert!(t.crop_origin.y + t.crop_size.height <= h);
        }

        #[test]
        fn remap_round_trip_within_one_pixel(
            cx in 0u32..2000, cy in 0u32..2000,
            w in 4u32..2000, h in 4u32..2000,
            px_frac in 0.0f64..1.0, py_frac in 0.0f64..1.0,
        ) {
            let img = ImageSize::try_new(w, h).unwrap();
            let cfg = ZoomConfig::default();
            let t = compute_zoom_window(PixelPoint::new(cx, cy), img, &cfg);
            let p = PixelPoint::new(
                t.crop_origin.x + (px_frac * (t.crop_size.width - 1) as f64) as u32,
                t.crop_origin.y + (py_frac * (t.crop_size.height - 1) as f64) as u32,
            );
            let back = map_point_to_original(map_point_to_zoomed(p, &t), &t);
            prop_assert!((back.x as i64 - p.x as i64).abs() <= 1);
            prop_assert!((back.y as i64 - p.y as i64).abs() <= 1);
        }
    }
}
