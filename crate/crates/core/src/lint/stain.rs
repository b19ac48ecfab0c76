//! Per-pixel stain classification and connected components.

use image::RgbImage;

use crate::lint::StainColorConfig;
use crate::raster::rgb_to_hsv;

/// Mutually exclusive boolean rasters, one per stain class; pixels in no
/// range are background.
#[derive(Debug, Clone, PartialEq)]
pub struct StainMasks {
    pub width: u32,
    pub height: u32,
    pub p16: Vec<bool>,
    pub ki67: Vec<bool>,
    pub negative: Vec<bool>,
}

impl StainMasks {
    pub fn len(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stained foreground: p16 or ki67.
    pub fn foreground(&self) -> Vec<bool> {
        self.p16
            .iter()
            .zip(&self.ki67)
            .map(|(&a, &b)| a || b)
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Class {
    Background = 0,
    P16 = 1,
    Ki67 = 2,
    Negative = 3,
}

/// Classify pixels by HSV range, then apply one 3x3 majority-smoothing
/// pass: a pixel is reassigned only when another class holds at least 6
/// of the 9 neighborhood samples, which removes speckle without eroding
/// solid shape boundaries.
pub fn stain_segment(image: &RgbImage, cfg: &StainColorConfig) -> StainMasks {
    let (w, h) = image.dimensions();
    let mut classes = vec![Class::Background; (w * h) as usize];
    for (i, p) in image.pixels().enumerate() {
        let (hue, sat, val) = rgb_to_hsv(p.0[0], p.0[1], p.0[2]);
        classes[i] = if cfg.p16.contains(hue, sat, val) {
            Class::P16
        } else if cfg.ki67.contains(hue, sat, val) {
            Class::Ki67
        } else if cfg.negative.contains(hue, sat, val) {
            Class::Negative
        } else {
            Class::Background
        };
    }

    let mut smoothed = classes.clone();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut counts = [0u8; 4];
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    counts[classes[(ny * w as i64 + nx) as usize] as usize] += 1;
                }
            }
            let center = classes[(y * w as i64 + x) as usize];
            let mut best = center;
            let mut best_count = counts[center as usize];
            for (ci, &count) in counts.iter().enumerate() {
                if count >= 6 && count > best_count {
                    best_count = count;
                    best = match ci {
                        0 => Class::Background,
                        1 => Class::P16,
                        2 => Class::Ki67,
                        _ => Class::Negative,
                    };
                }
            }
            smoothed[(y * w as i64 + x) as usize] = best;
        }
    }

    StainMasks {
        width: w,
        height: h,
        p16: smoothed.iter().map(|&c| c == Class::P16).collect(),
        ki67: smoothed.iter().map(|&c| c == Class::Ki67).collect(),
        negative: smoothed.iter().map(|&c| c == Class::Negative).collect(),
    }
}

/// One 8-connected component of a boolean raster.
#[derive(Debug, Clone)]
pub struct Component {
    /// Flat pixel indices, ascending.
    pub pixels: Vec<usize>,
    /// Inclusive pixel bounds (x0, y0, x1, y1).
    pub bounds: (u32, u32, u32, u32),
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

pub fn connected_components(mask: &[bool], width: u32, height: u32) -> Vec<Component> {
    let w = width as usize;
    let h = height as usize;
    debug_assert_eq!(mask.len(), w * h);
    let mut visited = vec![false; mask.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0usize, 0usize);
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let ni = (ny as usize) * w + nx as usize;
                    if mask[ni] && !visited[ni] {
                        visited[ni] = true;
                        stack.push(ni);
                    }
                }
            }
        }
        pixels.sort_unstable();
        components.push(Component {
            pixels,
            bounds: (x0 as u32, y0 as u32, x1 as u32, y1 as u32),
        });
    }
    components.sort_by_key(|c| c.pixels[0]);
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_slide, CellKind, SlideSpec, MAGENTA};
    use image::{Rgb, RgbImage};

    #[test]
    fn white_image_is_all_background() {
        let img = RgbImage::from_pixel(16, 16, Rgb([255, 255, 255]));
        let masks = stain_segment(&img, &StainColorConfig::default());
        assert!(!masks.p16.iter().any(|&b| b));
        assert!(!masks.ki67.iter().any(|&b| b));
        assert!(!masks.negative.iter().any(|&b| b));
    }

    #[test]
    fn masks_are_mutually_exclusive() {
        let slide = generate_slide(&SlideSpec::new(448, 448, 31), "s").unwrap();
        let masks = stain_segment(&slide.image, &StainColorConfig::default());
        for i in 0..masks.len() {
            let hits = masks.p16[i] as u8 + masks.ki67[i] as u8 + masks.negative[i] as u8;
            assert!(hits <= 1, "pixel {i} in {hits} masks");
        }
    }

    #[test]
    fn magenta_ellipse_lands_in_p16_mask() {
        let mut img = RgbImage::from_pixel(64, 64, Rgb([250, 250, 250]));
        let mut drawn = 0usize;
        for y in 0..64i64 {
            for x in 0..64i64 {
                let (nx, ny) = ((x - 32) as f64 / 12.0, (y - 32) as f64 / 9.0);
                if nx * nx + ny * ny <= 1.0 {
                    img.put_pixel(x as u32, y as u32, Rgb(MAGENTA));
                    drawn += 1;
                }
            }
        }
        let masks = stain_segment(&img, &StainColorConfig::default());
        let hit = masks.p16.iter().filter(|&&b| b).count();
        assert!(hit as f64 >= 0.99 * drawn as f64, "{hit} of {drawn}");
    }

    #[test]
    fn blue_purple_nucleus_is_negative_not_ki67() {
        let mut spec = SlideSpec::new(256, 256, 5);
        spec.dual_positive = 0;
        spec.false_positive = 0;
        spec.clusters = 0;
        spec.negative = 2;
        let slide = generate_slide(&spec, "s").unwrap();
        let masks = stain_segment(&slide.image, &StainColorConfig::default());
        let neg_cells: Vec<_> = slide
            .registry
            .cells
            .iter()
            .filter(|c| c.kind == CellKind::Negative)
            .collect();
        assert!(!neg_cells.is_empty());
        for cell in neg_cells {
            let (x0, y0, x1, y1) = cell.bounds_px;
            let mut neg = 0usize;
            let mut ki = 0usize;
            let mut total = 0usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = (y * masks.width + x) as usize;
                    total += 1;
                    neg += masks.negative[i] as usize;
                    ki += masks.ki67[i] as usize;
                }
            }
            assert_eq!(ki, 0);
            assert!(neg as f64 > 0.5 * total as f64);
        }
    }

    #[test]
    fn components_split_separate_blobs() {
        let w = 16u32;
        let mut mask = vec![false; 256];
        // two 2x2 blobs, far apart
        for (x, y) in [(1, 1), (2, 1), (1, 2), (2, 2), (10, 10), (11, 10), (10, 11), (11, 11)] {
            mask[y * 16 + x] = true;
        }
        let comps = connected_components(&mask, w, 16);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].area(), 4);
        assert_eq!(comps[0].bounds, (1, 1, 2, 2));
        assert_eq!(comps[1].bounds, (10, 10, 11, 11));
    }

    #[test]
    fn diagonal_pixels_connect() {
        let mut mask = vec![false; 16];
        mask[0] = true; // (0,0)
        mask[5] = true; // (1,1)
        let comps = connected_components(&mask, 4, 4);
        assert_eq!(comps.len(), 1);
    }
}
