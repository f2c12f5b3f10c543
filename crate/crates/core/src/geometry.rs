//! Pixel-space primitives: points, axis-aligned boxes, image sizes, and the
//! predicates the rewards, zoom decision, and evaluation are built on.
//!
//! Points are non-negative by construction. Boxes keep signed coordinates so
//! out-of-frame model predictions survive until [`clamp_box`] runs; the
//! corner-order invariant (`x1 <= x2`, `y1 <= y2`) is enforced at every
//! constructor. The all-zero box is a valid, distinguished value (the null
//! target).

use core::fmt;

/// A pixel coordinate. Carries no implicit image bound; bound checks are
/// explicit operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

impl PixelPoint {
    pub const ORIGIN: PixelPoint = PixelPoint { x: 0, y: 0 };

    pub const fn new(x: u32, y: u32) -> Self {
        PixelPoint { x, y }
    }

    pub const fn is_zero(&self) -> bool {
        self.x == 0 && self.y == 0
    }
}

/// Axis-aligned box given by two corners, `(x1, y1)` top-left and
/// `(x2, y2)` bottom-right, with `x1 <= x2` and `y1 <= y2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PixelBox {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

/// Corner-order violation reported by [`PixelBox::try_new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxOrderError {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl fmt::Display for BoxOrderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "box corners out of order: ({},{}),({},{})",
            self.x1, self.y1, self.x2, self.y2
        )
    }
}

impl PixelBox {
    /// The distinguished null box.
    pub const ZERO: PixelBox = PixelBox {
        x1: 0,
        y1: 0,
        x2: 0,
        y2: 0,
    };

    pub const fn try_new(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<Self, BoxOrderError> {
        if x1 <= x2 && y1 <= y2 {
            Ok(PixelBox { x1, y1, x2, y2 })
        } else {
            Err(BoxOrderError { x1, y1, x2, y2 })
        }
    }

    /// Builds a box from two arbitrary corners, swapping coordinates as
    /// needed so the invariant holds.
    pub const fn from_corners_normalized(x1: i64, y1: i64, x2: i64, y2: i64) -> Self {
        let (x1, x2) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        let (y1, y2) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
        PixelBox { x1, y1, x2, y2 }
    }

    pub const fn is_zero(&self) -> bool {
        self.x1 == 0 && self.y1 == 0 && self.x2 == 0 && self.y2 == 0
    }

    pub const fn width(&self) -> i64 {
        self.x2 - self.x1
    }

    pub const fn height(&self) -> i64 {
        self.y2 - self.y1
    }

    /// Continuous area `(x2 - x1) * (y2 - y1)`; zero for degenerate boxes.
    pub fn area(&self) -> f64 {
        (self.width() as f64) * (self.height() as f64)
    }
}

/// Image dimensions, strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

/// Zero-dimension error from [`ImageSize::try_new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroSizeError;

impl fmt::Display for ZeroSizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("image dimensions must be strictly positive")
    }
}

impl ImageSize {
    pub const fn try_new(width: u32, height: u32) -> Result<Self, ZeroSizeError> {
        if width > 0 && height > 0 {
            Ok(ImageSize { width, height })
        } else {
            Err(ZeroSizeError)
        }
    }
}

/// Closed-interval membership: `x1 <= p.x <= x2` and `y1 <= p.y <= y2`.
pub fn point_in_box(p: PixelPoint, b: PixelBox) -> bool {
    let (x, y) = (p.x as i64, p.y as i64);
    b.x1 <= x && x <= b.x2 && b.y1 <= y && y <= b.y2
}

/// Intersection-over-union with continuous box areas. Returns 0 when the
/// union has zero area, which also covers degenerate boxes.
pub fn iou(a: PixelBox, b: PixelBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0) as f64;
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0) as f64;
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Predicted box width and height, `(x2 - x1, y2 - y1)`.
pub fn box_dims(b: PixelBox) -> (i64, i64) {
    (b.width(), b.height())
}

/// Clips every coordinate to `[0, width]` x `[0, height]`.
pub fn clamp_box(b: PixelBox, s: ImageSize) -> PixelBox {
    let cx = |v: i64| v.clamp(0, s.width as i64);
    let cy = |v: i64| v.clamp(0, s.height as i64);
    PixelBox {
        x1: cx(b.x1),
        y1: cy(b.y1),
        x2: cx(b.x2),
        y2: cy(b.y2),
    }
}
