//! The three augmentations: horizontal flip, four-image mosaic around a
//! jittered center, and pixelwise mixup with a Beta(8,8) blend weight.
//!
//! Per-sample RNG streams come from hashing the image id into the master
//! seed so results do not depend on processing order.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Distribution};

use crate::boxgeom::BBox;
use crate::dataset::annotations::validate_box;
use crate::dataset::{ImageSource, Sample};
use crate::error::{Error, Result};

/// Stable per-sample seed derivation (FNV-1a over the image id).
pub fn derive_seed(master: u64, image_id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in image_id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    master ^ h
}

/// Mirror the raster and map `cx -> 1 - cx`. The raster flip is an exact
/// involution; box centers are exact whenever `1 - cx` is representable
/// (all pixel-grid and dyadic coordinates) and within 1 ulp otherwise.
pub fn hflip(sample: &Sample) -> Result<Sample> {
    let image = match &sample.image {
        ImageSource::None => ImageSource::None,
        src => {
            let raster = match src {
                ImageSource::Raster(r) => r.clone(),
                _ => sample.raster()?,
            };
            let (w, h) = raster.dimensions();
            let mut out = RgbImage::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    out.put_pixel(w - 1 - x, y, *raster.get_pixel(x, y));
                }
            }
            ImageSource::Raster(out)
        }
    };
    let boxes = sample
        .boxes
        .iter()
        .map(|b| {
            let mut f = *b;
            f.cx = 1.0 - b.cx;
            validate_box(&f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sample { image_id: sample.image_id.clone(), image, boxes })
}

const MOSAIC_DROP_FRACTION: f64 = 0.25;

/// Four tiles scaled (cover) into the quadrants around a jittered center;
/// boxes are remapped, clipped to their quadrant, and dropped when less
/// than a quarter of the scaled area survives.
pub fn mosaic(samples: &[Sample], seed: u64) -> Result<Sample> {
    if samples.len() != 4 {
        return Err(Error::Protocol(format!(
            "mosaic needs exactly 4 samples, got {}",
            samples.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rasters: Vec<RgbImage> = samples
        .iter()
        .map(|s| s.raster())
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = rasters[0].dimensions();
    let cx = (rng.gen_range(0.4..0.6) * w as f64).round();
    let cy = (rng.gen_range(0.4..0.6) * h as f64).round();
    // quadrant rects (x0, y0, x1, y1) in canvas pixels: TL, TR, BL, BR
    let rects = [
        (0.0, 0.0, cx, cy),
        (cx, 0.0, w as f64, cy),
        (0.0, cy, cx, h as f64),
        (cx, cy, w as f64, h as f64),
    ];
    let mut canvas = RgbImage::new(w, h);
    let mut boxes = Vec::new();
    for (qi, rect) in rects.iter().enumerate() {
        let src = &rasters[qi];
        let (sw, sh) = (src.width() as f64, src.height() as f64);
        let (qx0, qy0, qx1, qy1) = *rect;
        let (qw, qh) = (qx1 - qx0, qy1 - qy0);
        if qw < 1.0 || qh < 1.0 {
            continue;
        }
        // scale to cover the quadrant, anchored at the mosaic-center corner
        let scale = (qw / sw).max(qh / sh);
        let (ox, oy) = match qi {
            0 => (qx1 - sw * scale, qy1 - sh * scale),
            1 => (qx0, qy1 - sh * scale),
            2 => (qx1 - sw * scale, qy0),
            _ => (qx0, qy0),
        };
        for y in qy0 as u32..qy1 as u32 {
            for x in qx0 as u32..qx1 as u32 {
                let u = ((x as f64 + 0.5 - ox) / scale) as i64;
                let v = ((y as f64 + 0.5 - oy) / scale) as i64;
                let u = u.clamp(0, sw as i64 - 1) as u32;
                let v = v.clamp(0, sh as i64 - 1) as u32;
                canvas.put_pixel(x, y, *src.get_pixel(u, v));
            }
        }
        for b in &samples[qi].boxes {
            let (bx1, by1, bx2, by2) = b.corners();
            // source-normalized -> canvas pixels
            let px1 = ox + bx1 * sw * scale;
            let py1 = oy + by1 * sh * scale;
            let px2 = ox + bx2 * sw * scale;
            let py2 = oy + by2 * sh * scale;
            let scaled_area = (px2 - px1) * (py2 - py1);
            let cx1 = px1.max(qx0);
            let cy1 = py1.max(qy0);
            let cx2 = px2.min(qx1);
            let cy2 = py2.min(qy1);
            if cx2 <= cx1 || cy2 <= cy1 {
                continue;
            }
            if (cx2 - cx1) * (cy2 - cy1) < MOSAIC_DROP_FRACTION * scaled_area {
                continue;
            }
            let mut nb = BBox::from_corners(
                cx1 / w as f64,
                cy1 / h as f64,
                cx2 / w as f64,
                cy2 / h as f64,
            );
            nb.class_id = b.class_id;
            boxes.push(validate_box(&nb)?);
        }
    }
    let image_id = format!(
        "mosaic_{}",
        samples.iter().map(|s| s.image_id.as_str()).collect::<Vec<_>>().join("+")
    );
    Ok(Sample { image_id, image: ImageSource::Raster(canvas), boxes })
}

/// Pixelwise blend of two same-size samples with `lambda ~ Beta(8, 8)`;
/// the box lists are unioned.
pub fn mixup(a: &Sample, b: &Sample, seed: u64) -> Result<Sample> {
    let ra = a.raster()?;
    let rb = b.raster()?;
    if ra.dimensions() != rb.dimensions() {
        return Err(Error::Protocol(format!(
            "mixup needs same-size rasters, got {:?} and {:?}",
            ra.dimensions(),
            rb.dimensions()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let beta = Beta::new(8.0, 8.0).expect("valid Beta parameters");
    let lambda: f64 = beta.sample(&mut rng);
    let mut out = RgbImage::new(ra.width(), ra.height());
    for (dst, (pa, pb)) in out.pixels_mut().zip(ra.pixels().zip(rb.pixels())) {
        for c in 0..3 {
            dst.0[c] = (lambda * pa.0[c] as f64 + (1.0 - lambda) * pb.0[c] as f64).round() as u8;
        }
    }
    let mut boxes = a.boxes.clone();
    boxes.extend(b.boxes.iter().copied());
    let boxes = boxes.iter().map(validate_box).collect::<Result<Vec<_>>>()?;
    Ok(Sample {
        image_id: format!("mixup_{}+{}", a.image_id, b.image_id),
        image: ImageSource::Raster(out),
        boxes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn checker(w: u32, h: u32) -> RgbImage {
        let mut img = RgbImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let v = if (x + y) % 2 == 0 { 200 } else { 40 };
                img.put_pixel(x, y, Rgb([v, x as u8, y as u8]));
            }
        }
        img
    }

    #[test]
    fn hflip_is_an_involution() {
        let s = Sample::new("a", vec![BBox::norm(0.25, 0.4, 0.125, 0.2)]).with_raster(checker(9, 7));
        let once = hflip(&s).unwrap();
        assert_eq!(once.boxes[0].cx, 0.75);
        let twice = hflip(&once).unwrap();
        assert_eq!(twice.image, s.image);
        assert_eq!(twice.boxes, s.boxes);
    }

    #[test]
    fn hflip_mirror_law_and_double_flip_within_one_ulp() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..500 {
            let cx = rng.gen_range(0.1..0.9);
            let s = Sample::new("a", vec![BBox::norm(cx, 0.5, 0.1, 0.1)]);
            let once = hflip(&s).unwrap();
            assert_eq!(once.boxes[0].cx, 1.0 - cx);
            let twice = hflip(&once).unwrap();
            assert!((twice.boxes[0].cx - cx).abs() <= f64::EPSILON);
        }
        // the named example: cx = 0.3 mirrors to 0.7
        let s = Sample::new("a", vec![BBox::norm(0.3, 0.5, 0.1, 0.1)]);
        assert_eq!(hflip(&s).unwrap().boxes[0].cx, 0.7);
    }

    #[test]
    fn hflip_preserves_box_count() {
        let boxes = vec![
            BBox::norm(0.2, 0.2, 0.1, 0.1),
            BBox::norm(0.8, 0.9, 0.15, 0.1),
        ];
        let s = Sample::new("a", boxes.clone());
        assert_eq!(hflip(&s).unwrap().boxes.len(), boxes.len());
    }

    #[test]
    fn mosaic_arity_is_enforced() {
        let s = Sample::new("a", vec![]).with_raster(checker(8, 8));
        assert!(matches!(
            mosaic(&[s.clone(), s.clone()], 0),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn mosaic_bounds_box_count_and_keeps_boxes_valid() {
        let mk = |id: &str| {
            Sample::new(id, vec![BBox::norm(0.5, 0.5, 0.4, 0.4)]).with_raster(checker(64, 64))
        };
        for seed in 0..20 {
            let out = mosaic(&[mk("a"), mk("b"), mk("c"), mk("d")], seed).unwrap();
            assert!(out.boxes.len() <= 4);
            for b in &out.boxes {
                let (x1, y1, x2, y2) = b.corners();
                assert!(x1 >= -1e-12 && y1 >= -1e-12 && x2 <= 1.0 + 1e-12 && y2 <= 1.0 + 1e-12);
                assert!(b.w > 0.0 && b.h > 0.0);
            }
        }
    }

    #[test]
    fn mosaic_is_deterministic_per_seed() {
        let mk = |id: &str| {
            Sample::new(id, vec![BBox::norm(0.5, 0.5, 0.3, 0.3)]).with_raster(checker(32, 32))
        };
        let a = mosaic(&[mk("a"), mk("b"), mk("c"), mk("d")], 5).unwrap();
        let b = mosaic(&[mk("a"), mk("b"), mk("c"), mk("d")], 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixup_blends_and_unions() {
        let a = Sample::new("a", vec![BBox::norm(0.3, 0.3, 0.1, 0.1)])
            .with_raster(RgbImage::from_pixel(8, 8, Rgb([100, 0, 0])));
        let b = Sample::new("b", vec![BBox::norm(0.7, 0.7, 0.1, 0.1)])
            .with_raster(RgbImage::from_pixel(8, 8, Rgb([0, 100, 0])));
        let out = mixup(&a, &b, 3).unwrap();
        assert_eq!(out.boxes.len(), 2);
        let ImageSource::Raster(img) = &out.image else { panic!() };
        let p = img.get_pixel(0, 0).0;
        // both channels present, weights sum to ~100
        assert!(p[0] > 10 && p[1] > 10);
        assert!((p[0] as i32 + p[1] as i32 - 100).abs() <= 1);
        // wrong arity of raster sizes
        let c = Sample::new("c", vec![]).with_raster(RgbImage::new(4, 4));
        assert!(matches!(mixup(&a, &c, 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn derive_seed_is_stable_and_id_sensitive() {
        assert_eq!(derive_seed(1, "img_1"), derive_seed(1, "img_1"));
        assert_ne!(derive_seed(1, "img_1"), derive_seed(1, "img_2"));
        assert_ne!(derive_seed(1, "img_1"), derive_seed(2, "img_1"));
    }
}
