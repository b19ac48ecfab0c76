//! Deterministic synthetic dual-stain slide generator.
//!
//! Cells are hard-edged ellipses on a near-white background with mild
//! per-pixel noise. A dual-positive cell is a magenta cytoplasm ellipse
//! containing a brownish-yellow nucleus; a negative cell is a bare
//! blue-purple nucleus; a false-positive cell pairs a magenta cytoplasm
//! with a blue-purple nucleus. Only dual-positive cells get ground-truth
//! boxes. The palette is the documented contract with the lint module's
//! default color ranges.

mod defects;

pub use defects::{inject_defects, DefectRecord, DefectRule, DefectSpec};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{AnnotationSet, BBox};
use crate::error::{Error, Result};

pub const MAGENTA: [u8; 3] = [200, 40, 140];
pub const BROWNISH_YELLOW: [u8; 3] = [150, 110, 30];
pub const BLUE_PURPLE: [u8; 3] = [90, 70, 160];
pub const BACKGROUND: [u8; 3] = [250, 250, 250];
pub const NOISE_AMPLITUDE: i16 = 10;

/// Default minimum clearance in pixels between ellipse bounding rects;
/// large enough that a loosened box never swallows a neighbor's pixels.
pub const DEFAULT_MIN_GAP: f64 = 26.0;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlideSpec {
    pub width: u32,
    pub height: u32,
    pub dual_positive: usize,
    pub negative: usize,
    pub false_positive: usize,
    pub clusters: usize,
    /// Inclusive range of cells per cluster.
    pub cluster_size: (usize, usize),
    /// Cluster axis orientation range, degrees from horizontal.
    pub cluster_orientation_deg: (f64, f64),
    /// Minimum clearance between cell bounding rects, pixels.
    pub min_gap_px: f64,
    /// Ellipse radius range for stained cells, pixels.
    pub cell_radius_px: (f64, f64),
    pub seed: u64,
}

impl SlideSpec {
    pub fn new(width: u32, height: u32, seed: u64) -> Self {
        Self {
            width,
            height,
            dual_positive: 8,
            negative: 3,
            false_positive: 2,
            clusters: 2,
            cluster_size: (5, 8),
            cluster_orientation_deg: (20.0, 70.0),
            min_gap_px: DEFAULT_MIN_GAP,
            cell_radius_px: (7.0, 12.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::Config(format!(
                "slide extents must be >= 64, got {}x{}",
                self.width, self.height
            )));
        }
        if self.min_gap_px < 0.0 {
            return Err(Error::Config("min gap must be non-negative".into()));
        }
        if self.cell_radius_px.0 < 2.0 || self.cell_radius_px.0 > self.cell_radius_px.1 {
            return Err(Error::Config(format!(
                "bad cell radius range {:?}",
                self.cell_radius_px
            )));
        }
        if self.cluster_size.0 < 2 || self.cluster_size.0 > self.cluster_size.1 {
            return Err(Error::Config(format!(
                "bad cluster size range {:?}",
                self.cluster_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    DualPositive,
    Negative,
    FalsePositive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub kind: CellKind,
    /// Ellipse center and radii of the outermost (cytoplasm or nucleus)
    /// ellipse, in pixels.
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    /// Painted extents, inclusive pixel coordinates.
    pub bounds_px: (u32, u32, u32, u32),
    pub cluster_id: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CellRegistry {
    pub cells: Vec<CellRecord>,
    pub n_clusters: usize,
}

#[derive(Debug, Clone)]
pub struct Slide {
    pub image: RgbImage,
    pub annotations: AnnotationSet,
    pub registry: CellRegistry,
}

struct PendingCell {
    kind: CellKind,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cluster_id: Option<usize>,
}

fn rect(cx: f64, cy: f64, rx: f64, ry: f64) -> (f64, f64, f64, f64) {
    (cx - rx, cy - ry, cx + rx, cy + ry)
}

fn rects_clear(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), gap: f64) -> bool {
    a.2 + gap <= b.0 || b.2 + gap <= a.0 || a.3 + gap <= b.1 || b.3 + gap <= a.1
}

/// Generate a slide. Identical `(spec, image_id)` inputs produce identical
/// pixels and annotations.
pub fn generate_slide(spec: &SlideSpec, image_id: &str) -> Result<Slide> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut placed: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut cells: Vec<PendingCell> = Vec::new();

    // clusters first: they need the most room
    for cluster_id in 0..spec.clusters {
        let n = rng.gen_range(spec.cluster_size.0..=spec.cluster_size.1);
        let mut done = false;
        'attempt: for _ in 0..PLACEMENT_ATTEMPTS {
            let theta = rng
                .gen_range(spec.cluster_orientation_deg.0..=spec.cluster_orientation_deg.1)
                .to_radians();
            let (dx, dy) = (theta.cos(), theta.sin());
            let radii: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    (
                        rng.gen_range(spec.cell_radius_px.0..spec.cell_radius_px.1),
                        rng.gen_range(spec.cell_radius_px.0..spec.cell_radius_px.1),
                    )
                })
                .collect();
            // spacing keeps member pixels disjoint with a clear gap
            let mut offsets = vec![0.0f64];
            for i in 1..n {
                let r_prev = radii[i - 1].0.max(radii[i - 1].1);
                let r_cur = radii[i].0.max(radii[i].1);
                let gap = rng.gen_range(24.0..30.0);
                offsets.push(offsets[i - 1] + r_prev + r_cur + gap);
            }
            let span = offsets[n - 1];
            let margin = 14.0;
            let x0 = rng.gen_range(margin..(w - margin - span * dx).max(margin + 1.0));
            let y0 = rng.gen_range(margin..(h - margin - span * dy).max(margin + 1.0));
            let members: Vec<PendingCell> = (0..n)
                .map(|i| PendingCell {
                    kind: CellKind::DualPositive,
                    cx: x0 + offsets[i] * dx,
                    cy: y0 + offsets[i] * dy,
                    rx: radii[i].0,
                    ry: radii[i].1,
                    cluster_id: Some(cluster_id),
                })
                .collect();
            for m in &members {
                let r = rect(m.cx, m.cy, m.rx, m.ry);
                if r.0 < 1.0 || r.1 < 1.0 || r.2 >= w - 1.0 || r.3 >= h - 1.0 {
                    continue 'attempt;
                }
                if placed.iter().any(|p| !rects_clear(*p, r, spec.min_gap_px)) {
                    continue 'attempt;
                }
            }
            for m in &members {
                placed.push(rect(m.cx, m.cy, m.rx, m.ry));
            }
            cells.extend(members);
            done = true;
            break;
        }
        if !done {
            return Err(Error::Placement(format!(
                "placed {cluster_id} of {} clusters before running out of room",
                spec.clusters
            )));
        }
    }

    // singles: dual positives, then false positives, then negatives
    let r = spec.cell_radius_px;
    let singles = [
        (CellKind::DualPositive, spec.dual_positive, r.0..r.1),
        (CellKind::FalsePositive, spec.false_positive, r.0..r.1),
        (CellKind::Negative, spec.negative, r.0 * 0.55..r.1 * 0.55),
    ];
    for (kind, count, radius_range) in singles {
        for i in 0..count {
            let mut done = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let rx = rng.gen_range(radius_range.clone());
                let ry = rng.gen_range(radius_range.clone());
                let cx = rng.gen_range(rx + 1.0..w - rx - 1.0);
                let cy = rng.gen_range(ry + 1.0..h - ry - 1.0);
                let r = rect(cx, cy, rx, ry);
                if placed.iter().all(|p| rects_clear(*p, r, spec.min_gap_px)) {
                    placed.push(r);
                    cells.push(PendingCell { kind, cx, cy, rx, ry, cluster_id: None });
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(Error::Placement(format!(
                    "placed {i} of {count} {kind:?} cells before running out of room"
                )));
            }
        }
    }

    // paint
    let mut image = RgbImage::from_pixel(spec.width, spec.height, Rgb(BACKGROUND));
    let mut registry = CellRegistry { cells: Vec::with_capacity(cells.len()), n_clusters: spec.clusters };
    for cell in &cells {
        let bounds = paint_cell(&mut image, cell);
        registry.cells.push(CellRecord {
            kind: cell.kind,
            cx: cell.cx,
            cy: cell.cy,
            rx: cell.rx,
            ry: cell.ry,
            bounds_px: bounds,
            cluster_id: cell.cluster_id,
        });
    }

    // per-pixel noise, raster scan order
    for p in image.pixels_mut() {
        for c in 0..3 {
            let n = rng.gen_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE);
            p.0[c] = (p.0[c] as i16 + n).clamp(0, 255) as u8;
        }
    }

    let boxes = registry
        .cells
        .iter()
        .filter(|c| c.kind == CellKind::DualPositive)
        .map(|c| bounds_to_box(c.bounds_px, spec.width, spec.height))
        .collect();
    Ok(Slide {
        image,
        annotations: AnnotationSet { image_id: image_id.to_string(), boxes },
        registry,
    })
}

/// Tight normalized box over inclusive pixel bounds.
pub fn bounds_to_box(bounds: (u32, u32, u32, u32), w: u32, h: u32) -> BBox {
    let (x0, y0, x1, y1) = bounds;
    let bw = (x1 - x0 + 1) as f64 / w as f64;
    let bh = (y1 - y0 + 1) as f64 / h as f64;
    let cx = (x0 + x1 + 1) as f64 / 2.0 / w as f64;
    let cy = (y0 + y1 + 1) as f64 / 2.0 / h as f64;
    BBox::norm(cx, cy, bw, bh)
}

fn fill_ellipse(image: &mut RgbImage, cx: f64, cy: f64, rx: f64, ry: f64, color: [u8; 3]) -> Option<(u32, u32, u32, u32)> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let x_lo = ((cx - rx).floor() as i64).max(0);
    let x_hi = ((cx + rx).ceil() as i64).min(w - 1);
    let y_lo = ((cy - ry).floor() as i64).max(0);
    let y_hi = ((cy + ry).ceil() as i64).min(h - 1);
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let nx = (x as f64 + 0.5 - cx) / rx;
            let ny = (y as f64 + 0.5 - cy) / ry;
            if nx * nx + ny * ny <= 1.0 {
                image.put_pixel(x as u32, y as u32, Rgb(color));
                let (x, y) = (x as u32, y as u32);
                bounds = Some(match bounds {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bounds
}

fn paint_cell(image: &mut RgbImage, cell: &PendingCell) -> (u32, u32, u32, u32) {
    match cell.kind {
        CellKind::DualPositive => {
            let outer = fill_ellipse(image, cell.cx, cell.cy, cell.rx, cell.ry, MAGENTA)
                .expect("cell placed inside the image");
            fill_ellipse(image, cell.cx, cell.cy, cell.rx * 0.45, cell.ry * 0.45, BROWNISH_YELLOW);
            outer
        }
        CellKind::FalsePositive => {
            let outer = fill_ellipse(image, cell.cx, cell.cy, cell.rx, cell.ry, MAGENTA)
                .expect("cell placed inside the image");
            fill_ellipse(image, cell.cx, cell.cy, cell.rx * 0.45, cell.ry * 0.45, BLUE_PURPLE);
            outer
        }
        CellKind::Negative => fill_ellipse(image, cell.cx, cell.cy, cell.rx, cell.ry, BLUE_PURPLE)
            .expect("cell placed inside the image"),
    }
}
