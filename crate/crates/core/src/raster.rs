//! Small raster utilities shared by the generator, linter and dataset
//! tooling. Images are 8-bit RGB; PNG and PPM are the supported formats.

use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};

pub fn load_raster<P: AsRef<Path>>(path: P) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn save_raster<P: AsRef<Path>>(path: P, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") | Some("ppm") => {
            img.save(path)?;
            Ok(())
        }
        other => Err(Error::Validation(format!(
            "unsupported image extension {other:?}; use .png or .ppm"
        ))),
    }
}

/// RGB (0-255) to HSV with hue in degrees [0, 360), saturation and value
/// in [0, 1].
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let r = r as f64 / 255.0;
    let g = g as f64 / 255.0;
    let b = b as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}
