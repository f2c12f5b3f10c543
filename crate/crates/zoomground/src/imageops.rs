//! Raster operations behind the zoom engine and the dataset augmenter.

use image::imageops::FilterType;
use image::{DynamicImage, GenericImage, GenericImageView};
use zoomground_core::geometry::ImageSize;
use zoomground_core::zoom::ZoomTransform;

#[derive(Debug, thiserror::Error)]
pub enum ImageOpError {
    #[error("image is {actual_w}x{actual_h} but the transform records {expected_w}x{expected_h}")]
    DimensionMismatch {
        actual_w: u32,
        actual_h: u32,
        expected_w: u32,
        expected_h: u32,
    },
}

/// Cuts the crop window out of the original screenshot and scales it back
/// up to the original resolution with bilinear interpolation.
pub fn crop_and_resize(img: &DynamicImage, t: &ZoomTransform) -> Result<DynamicImage, ImageOpError> {
    let (w, h) = img.dimensions();
    if (w, h) != (t.output_size.width, t.output_size.height) {
        return Err(ImageOpError::DimensionMismatch {
            actual_w: w,
            actual_h: h,
            expected_w: t.output_size.width,
            expected_h: t.output_size.height,
        });
    }
    let crop = img.crop_imm(
        t.crop_origin.x,
        t.crop_origin.y,
        t.crop_size.width,
        t.crop_size.height,
    );
    Ok(crop.resize_exact(
        t.output_size.width,
        t.output_size.height,
        FilterType::Triangle,
    ))
}

/// Pads an image with constant black on each side, then optionally resizes
/// to a target size.
pub fn pad_and_resize(
    img: &DynamicImage,
    pad: [u32; 4], // left, top, right, bottom
    target: Option<ImageSize>,
) -> DynamicImage {
    let [l, t, r, b] = pad;
    let (w, h) = img.dimensions();
    let padded = if pad == [0, 0, 0, 0] {
        img.clone()
    } else {
        let mut canvas = DynamicImage::new_rgba8(w + l + r, h + t + b);
        canvas
            .copy_from(img, l, t)
            .expect("padded canvas always fits the source");
        canvas
    };
    match target {
        Some(size) => padded.resize_exact(size.width, size.height, FilterType::Triangle),
        None => padded,
    }
}
