//! The four lint rules, each reduced to measurable geometry over the
//! stain masks.

use crate::boxgeom::BBox;
use crate::error::{Error, Result};
use crate::lint::stain::{connected_components, StainMasks};
use crate::lint::{LintFinding, LintRule, Severity};
use crate::synth::bounds_to_box;

/// Inclusive pixel rect of a normalized box, clamped to the image.
fn pixel_rect(b: &BBox, w: u32, h: u32) -> (u32, u32, u32, u32) {
    let (x1, y1, x2, y2) = b.corners();
    let x0 = ((x1 * w as f64).floor().max(0.0) as u32).min(w - 1);
    let y0 = ((y1 * h as f64).floor().max(0.0) as u32).min(h - 1);
    let x1 = (((x2 * w as f64).ceil() as i64 - 1).max(x0 as i64) as u32).min(w - 1);
    let y1 = (((y2 * h as f64).ceil() as i64 - 1).max(y0 as i64) as u32).min(h - 1);
    (x0, y0, x1, y1)
}

fn foreground_bounds_in_rect(
    fg: &[bool],
    masks: &StainMasks,
    rect: (u32, u32, u32, u32),
) -> Option<(u32, u32, u32, u32)> {
    let (x0, y0, x1, y1) = rect;
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if fg[(y * masks.width + x) as usize] {
                bounds = Some(match bounds {
                    None => (x, y, x, y),
                    Some((bx0, by0, bx1, by1)) => {
                        (bx0.min(x), by0.min(y), bx1.max(x), by1.max(y))
                    }
                });
            }
        }
    }
    bounds
}

/// Flag boxes with more than `margin_thr_px` of slack between any side and
/// the stained content; the suggested box is the content bounds plus one
/// pixel. Boxes over zero stained pixels are degenerate-content findings
/// whose suggested fix is removal.
pub fn check_tightness(
    b: &BBox,
    masks: &StainMasks,
    margin_thr_px: usize,
    image_id: &str,
) -> Option<LintFinding> {
    let rect = pixel_rect(b, masks.width, masks.height);
    let fg = masks.foreground();
    let Some((fx0, fy0, fx1, fy1)) = foreground_bounds_in_rect(&fg, masks, rect) else {
        let (x0, y0, x1, y1) = rect;
        return Some(LintFinding {
            rule: LintRule::LooseBox,
            image_id: image_id.to_string(),
            boxes: vec![*b],
            measurement: (x1 - x0 + 1).max(y1 - y0 + 1) as f64,
            severity: Severity::Error,
            degenerate_content: true,
            suggested_fix: vec![],
        });
    };
    let (x0, y0, x1, y1) = rect;
    let worst = [fx0 - x0, fy0 - y0, x1 - fx1, y1 - fy1]
        .into_iter()
        .max()
        .unwrap();
    if worst as usize <= margin_thr_px {
        return None;
    }
    let suggested = (
        fx0.saturating_sub(1),
        fy0.saturating_sub(1),
        (fx1 + 1).min(masks.width - 1),
        (fy1 + 1).min(masks.height - 1),
    );
    Some(LintFinding {
        rule: LintRule::LooseBox,
        image_id: image_id.to_string(),
        boxes: vec![*b],
        measurement: worst as f64,
        severity: Severity::Warning,
        degenerate_content: false,
        suggested_fix: vec![bounds_to_box(suggested, masks.width, masks.height)],
    })
}

/// Median pixel area over every box of the corpus; needs at least three.
pub fn median_box_area_px(areas: &[f64]) -> Result<f64> {
    if areas.len() < 3 {
        return Err(Error::Protocol(format!(
            "scale-disparity needs >= 3 boxes to estimate a median, got {}",
            areas.len()
        )));
    }
    let mut sorted = areas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Flag one box whose area exceeds `ratio_thr` times the corpus median;
/// the suggested fix is one box per stained component inside it.
pub fn check_scale_disparity(
    b: &BBox,
    masks: &StainMasks,
    median_area_px: f64,
    ratio_thr: f64,
    image_id: &str,
) -> Option<LintFinding> {
    let rect = pixel_rect(b, masks.width, masks.height);
    let (x0, y0, x1, y1) = rect;
    let area = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
    let ratio = area / median_area_px;
    if ratio <= ratio_thr {
        return None;
    }
    let fg = masks.foreground();
    let mut suggested = Vec::new();
    for comp in connected_components(&fg, masks.width, masks.height) {
        let inside: Vec<usize> = comp
            .pixels
            .iter()
            .copied()
            .filter(|&i| {
                let x = (i as u32) % masks.width;
                let y = (i as u32) / masks.width;
                x >= x0 && x <= x1 && y >= y0 && y <= y1
            })
            .collect();
        // skip slivers of components that mostly live outside the box
        if inside.len() < 9 || (inside.len() as f64) < 0.3 * comp.area() as f64 {
            continue;
        }
        let mut bounds = (masks.width, masks.height, 0u32, 0u32);
        for &i in &inside {
            let x = (i as u32) % masks.width;
            let y = (i as u32) / masks.width;
            bounds = (bounds.0.min(x), bounds.1.min(y), bounds.2.max(x), bounds.3.max(y));
        }
        suggested.push(bounds_to_box(bounds, masks.width, masks.height));
    }
    Some(LintFinding {
        rule: LintRule::ScaleDisparity,
        image_id: image_id.to_string(),
        boxes: vec![*b],
        measurement: ratio,
        severity: Severity::Warning,
        degenerate_content: false,
        suggested_fix: suggested,
    })
}

/// Flag stained components that carry both stain signals (the dual-stain
/// evidence for a positive cell), are at least `min_area_px`, and are
/// covered by the union of boxes for less than `coverage_thr` of their
/// area. Suggested fix: the component bounds.
pub fn find_unlabeled(
    masks: &StainMasks,
    boxes: &[BBox],
    min_area_px: usize,
    coverage_thr: f64,
    image_id: &str,
) -> Vec<LintFinding> {
    let fg = masks.foreground();
    let rects: Vec<(u32, u32, u32, u32)> = boxes
        .iter()
        .map(|b| pixel_rect(b, masks.width, masks.height))
        .collect();
    let mut findings = Vec::new();
    for comp in connected_components(&fg, masks.width, masks.height) {
        if comp.area() < min_area_px {
            continue;
        }
        let has_p16 = comp.pixels.iter().any(|&i| masks.p16[i]);
        let has_ki67 = comp.pixels.iter().any(|&i| masks.ki67[i]);
        if !has_p16 || !has_ki67 {
            continue;
        }
        let covered = comp
            .pixels
            .iter()
            .filter(|&&i| {
                let x = (i as u32) % masks.width;
                let y = (i as u32) / masks.width;
                rects
                    .iter()
                    .any(|&(x0, y0, x1, y1)| x >= x0 && x <= x1 && y >= y0 && y <= y1)
            })
            .count();
        let coverage = covered as f64 / comp.area() as f64;
        if coverage < coverage_thr {
            findings.push(LintFinding {
                rule: LintRule::UnlabeledCell,
                image_id: image_id.to_string(),
                boxes: vec![],
                measurement: coverage,
                severity: Severity::Warning,
                degenerate_content: false,
                suggested_fix: vec![bounds_to_box(comp.bounds, masks.width, masks.height)],
            });
        }
    }
    findings
}

/// Flag sparse, elongated content: foreground fill below `fill_thr` AND
/// principal-axis elongation above `elong_thr`. The suggested fix slices
/// the content along its principal axis into segments of aspect <= 2.
pub fn check_diagonal_cluster(
    b: &BBox,
    masks: &StainMasks,
    fill_thr: f64,
    elong_thr: f64,
    image_id: &str,
) -> Option<LintFinding> {
    let rect = pixel_rect(b, masks.width, masks.height);
    let (x0, y0, x1, y1) = rect;
    let fg = masks.foreground();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if fg[(y * masks.width + x) as usize] {
                pts.push((x as f64 + 0.5, y as f64 + 0.5));
            }
        }
    }
    if pts.len() < 3 {
        return None;
    }
    let rect_area = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
    let fill = pts.len() as f64 / rect_area;

    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cxx = 0.0;
    let mut cyy = 0.0;
    let mut cxy = 0.0;
    for (x, y) in &pts {
        cxx += (x - mx) * (x - mx);
        cyy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
    }
    cxx /= n;
    cyy /= n;
    cxy /= n;
    let trace = cxx + cyy;
    let disc = ((cxx - cyy).powi(2) + 4.0 * cxy * cxy).sqrt();
    let l1 = (trace + disc) / 2.0;
    let l2 = ((trace - disc) / 2.0).max(1e-9);
    let elongation = (l1 / l2).sqrt();

    if !(fill < fill_thr && elongation > elong_thr) {
        return None;
    }

    // slice along the principal axis into segments of aspect <= 2
    let phi = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    let (ux, uy) = (phi.cos(), phi.sin());
    let ts: Vec<f64> = pts.iter().map(|(x, y)| x * ux + y * uy).collect();
    let ps: Vec<f64> = pts.iter().map(|(x, y)| -x * uy + y * ux).collect();
    let (tmin, tmax) = (
        ts.iter().cloned().fold(f64::INFINITY, f64::min),
        ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (pmin, pmax) = (
        ps.iter().cloned().fold(f64::INFINITY, f64::min),
        ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let length = (tmax - tmin).max(1.0);
    let width = (pmax - pmin).max(1.0);
    let segments = ((length / (2.0 * width)).ceil() as usize).max(2);
    let mut seg_bounds: Vec<Option<(u32, u32, u32, u32)>> = vec![None; segments];
    for ((x, y), t) in pts.iter().zip(&ts) {
        let si = (((t - tmin) / length * segments as f64) as usize).min(segments - 1);
        let (px, py) = (*x as u32, *y as u32);
        seg_bounds[si] = Some(match seg_bounds[si] {
            None => (px, py, px, py),
            Some((a, b, c, d)) => (a.min(px), b.min(py), c.max(px), d.max(py)),
        });
    }
    let suggested: Vec<BBox> = seg_bounds
        .into_iter()
        .flatten()
        .map(|bd| bounds_to_box(bd, masks.width, masks.height))
        .collect();

    Some(LintFinding {
        rule: LintRule::DiagonalCluster,
        image_id: image_id.to_string(),
        boxes: vec![*b],
        measurement: elongation,
        severity: Severity::Warning,
        degenerate_content: false,
        suggested_fix: suggested,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lint::StainColorConfig;
    use crate::lint::stain::stain_segment;
    use crate::synth::MAGENTA;
    use image::{Rgb, RgbImage};

    fn masks_with_blob(w: u32, h: u32, rect: (u32, u32, u32, u32)) -> StainMasks {
        let mut img = RgbImage::from_pixel(w, h, Rgb([250, 250, 250]));
        for y in rect.1..=rect.3 {
            for x in rect.0..=rect.2 {
                img.put_pixel(x, y, Rgb(MAGENTA));
            }
        }
        stain_segment(&img, &StainColorConfig::default())
    }

    #[test]
    fn tight_box_yields_no_finding() {
        let masks = masks_with_blob(64, 64, (20, 20, 39, 39));
        let b = bounds_to_box((20, 20, 39, 39), 64, 64);
        assert!(check_tightness(&b, &masks, 4, "img").is_none());
    }

    #[test]
    fn slack_box_suggests_content_bounds_plus_one() {
        let masks = masks_with_blob(64, 64, (31, 30, 40, 40));
        let b = bounds_to_box((21, 20, 50, 50), 64, 64); // 10px slack around it
        let f = check_tightness(&b, &masks, 4, "img").unwrap();
        assert_eq!(f.rule, LintRule::LooseBox);
        assert!(f.measurement >= 10.0);
        assert!(!f.degenerate_content);
        let s = f.suggested_fix[0];
        let want = bounds_to_box((30, 29, 41, 41), 64, 64);
        assert_eq!(s, want);
        // suggested fix is itself tight
        assert!(check_tightness(&s, &masks, 4, "img").is_none());
    }

    #[test]
    fn empty_box_is_degenerate() {
        let masks = masks_with_blob(64, 64, (2, 2, 5, 5));
        let b = bounds_to_box((30, 30, 50, 50), 64, 64);
        let f = check_tightness(&b, &masks, 4, "img").unwrap();
        assert!(f.degenerate_content);
        assert_eq!(f.severity, Severity::Error);
        assert!(f.suggested_fix.is_empty());
    }

    #[test]
    fn median_needs_three_boxes() {
        assert!(median_box_area_px(&[1.0, 2.0]).is_err());
        assert_eq!(median_box_area_px(&[1.0, 5.0, 9.0]).unwrap(), 5.0);
        assert_eq!(median_box_area_px(&[1.0, 3.0, 5.0, 9.0]).unwrap(), 4.0);
    }

    #[test]
    fn disparity_arithmetic() {
        let masks = masks_with_blob(128, 128, (10, 10, 20, 20));
        // 100x100 box against a 400 px^2 median: ratio 25
        let b = bounds_to_box((5, 5, 104, 104), 128, 128);
        let f = check_scale_disparity(&b, &masks, 400.0, 20.0, "img").unwrap();
        assert!((f.measurement - 25.0).abs() < 1e-12);
        // equal-area boxes are never flagged
        let small = bounds_to_box((10, 10, 20, 20), 128, 128);
        assert!(check_scale_disparity(&small, &masks, 121.0, 20.0, "img").is_none());
    }

    #[test]
    fn unlabeled_requires_dual_evidence_and_low_coverage() {
        // dual-stained cell: magenta blob with a brown core
        let mut img = RgbImage::from_pixel(96, 96, Rgb([250, 250, 250]));
        for y in 20..50u32 {
            for x in 20..50u32 {
                img.put_pixel(x, y, Rgb(MAGENTA));
            }
        }
        for y in 30..40u32 {
            for x in 30..40u32 {
                img.put_pixel(x, y, Rgb(crate::synth::BROWNISH_YELLOW));
            }
        }
        let masks = stain_segment(&img, &StainColorConfig::default());
        // fully boxed: no finding
        let covered = find_unlabeled(&masks, &[bounds_to_box((20, 20, 49, 49), 96, 96)], 100, 0.3, "i");
        assert!(covered.is_empty());
        // unboxed: one finding with component bounds within 2px
        let found = find_unlabeled(&masks, &[], 100, 0.3, "i");
        assert_eq!(found.len(), 1);
        let s = found[0].suggested_fix[0];
        let want = bounds_to_box((20, 20, 49, 49), 96, 96);
        assert!((s.cx - want.cx).abs() * 96.0 <= 2.0);
        assert!((s.w - want.w).abs() * 96.0 <= 4.0);
        // small speck below the area floor: ignored
        let mut speck = RgbImage::from_pixel(96, 96, Rgb([250, 250, 250]));
        for y in 10..17u32 {
            for x in 10..17u32 {
                speck.put_pixel(x, y, Rgb(MAGENTA));
            }
        }
        speck.put_pixel(13, 13, Rgb(crate::synth::BROWNISH_YELLOW));
        let m2 = stain_segment(&speck, &StainColorConfig::default());
        assert!(find_unlabeled(&m2, &[], 100, 0.3, "i").is_empty());
    }

    #[test]
    fn compact_blob_is_not_a_diagonal_cluster() {
        let masks = masks_with_blob(64, 64, (20, 20, 40, 40));
        let b = bounds_to_box((20, 20, 40, 40), 64, 64);
        assert!(check_diagonal_cluster(&b, &masks, 0.35, 3.0, "i").is_none());
    }

    #[test]
    fn oriented_strip_is_flagged_and_fix_covers_it() {
        // 45-degree strip of 8:1 aspect inside its axis-aligned box
        let mut img = RgbImage::from_pixel(128, 128, Rgb([250, 250, 250]));
        let mut strip_pixels = Vec::new();
        for i in 0..80i64 {
            for dy in -4..=4i64 {
                for dx in -4..=4i64 {
                    let (x, y) = (20 + i + dx, 20 + i + dy);
                    if (0..128).contains(&x) && (0..128).contains(&y) {
                        img.put_pixel(x as u32, y as u32, Rgb(MAGENTA));
                        strip_pixels.push((x as u32, y as u32));
                    }
                }
            }
        }
        let masks = stain_segment(&img, &StainColorConfig::default());
        let b = bounds_to_box((16, 16, 103, 103), 128, 128);
        let f = check_diagonal_cluster(&b, &masks, 0.35, 3.0, "i").unwrap();
        assert!(f.measurement > 3.0);
        assert!(f.suggested_fix.len() >= 2);
        // segment boxes jointly cover at least 95% of the strip pixels
        let rects: Vec<(u32, u32, u32, u32)> = f
            .suggested_fix
            .iter()
            .map(|s| super::pixel_rect(s, 128, 128))
            .collect();
        let fgmask = masks.foreground();
        let covered = strip_pixels
            .iter()
            .filter(|&&(x, y)| fgmask[(y * 128 + x) as usize])
            .filter(|&&(x, y)| {
                rects
                    .iter()
                    .any(|&(x0, y0, x1, y1)| x >= x0 && x <= x1 && y >= y0 && y <= y1)
            })
            .count();
        let total = strip_pixels
            .iter()
            .filter(|&&(x, y)| fgmask[(y * 128 + x) as usize])
            .count();
        assert!(covered as f64 >= 0.95 * total as f64, "{covered}/{total}");
        // each suggested segment is clean under the same rule
        for s in &f.suggested_fix {
            assert!(check_diagonal_cluster(s, &masks, 0.35, 3.0, "i").is_none());
        }
    }

    #[test]
    fn tiny_foreground_skips_diagonal_check() {
        let masks = masks_with_blob(64, 64, (10, 10, 10, 10));
        let b = bounds_to_box((0, 0, 63, 63), 64, 64);
        assert!(check_diagonal_cluster(&b, &masks, 0.35, 3.0, "i").is_none());
    }
}
