//! Axis-aligned box algebra: IoU, the EIoU / Focal-EIoU losses and the CIoU
//! baseline, analytic EIoU gradients, and greedy NMS.
//!
//! Boxes are center-parameterized `(cx, cy, w, h)` and unit-tagged; the
//! corner form is derived on demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate convention of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Coordinates and extents in `[0, 1]` relative to the image.
    #[default]
    Normalized,
    /// Coordinates and extents in pixels.
    Pixel,
}

/// One bounding box: center, extents, class and optional confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub units: Units,
}

impl BBox {
    pub fn norm(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h, class_id: 0, confidence: None, units: Units::Normalized }
    }

    pub fn pixel(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h, class_id: 0, confidence: None, units: Units::Pixel }
    }

    pub fn with_confidence(mut self, c: f64) -> Self {
        self.confidence = Some(c);
        self
    }

    pub fn with_class(mut self, id: u32) -> Self {
        self.class_id = id;
        self
    }

    /// Corner form `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::norm((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn check_extents(&self) -> Result<()> {
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::Domain(format!(
                "box extents must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }
}

/// Per-image ground-truth boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub image_id: String,
    pub boxes: Vec<BBox>,
}

/// Per-image scored predictions; every box must carry a confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub image_id: String,
    pub boxes: Vec<BBox>,
}

impl DetectionSet {
    pub fn validate(&self) -> Result<()> {
        for b in &self.boxes {
            if b.confidence.is_none() {
                return Err(Error::Validation(format!(
                    "detection without confidence in image {}",
                    self.image_id
                )));
            }
        }
        Ok(())
    }
}

/// Geometry shared by the IoU-family losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnclosureStats {
    pub iou: f64,
    /// Squared distance between the two box centers.
    pub center_dist_sq: f64,
    /// Squared diagonal of the smallest enclosing box (`cw_sq + ch_sq`).
    pub c_sq: f64,
    pub cw_sq: f64,
    pub ch_sq: f64,
}

/// Denominator clamp that keeps degenerate enclosures from dividing by zero.
const DENOM_CLAMP: f64 = 1e-9;

fn intersection(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    iw * ih
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.check_extents()?;
    b.check_extents()?;
    let inter = intersection(a, b);
    Ok(inter / (a.area() + b.area() - inter))
}

pub fn enclosure_stats(pred: &BBox, gt: &BBox) -> Result<EnclosureStats> {
    let iou = iou(pred, gt)?;
    let (px1, py1, px2, py2) = pred.corners();
    let (gx1, gy1, gx2, gy2) = gt.corners();
    let cw = px2.max(gx2) - px1.min(gx1);
    let ch = py2.max(gy2) - py1.min(gy1);
    let dx = pred.cx - gt.cx;
    let dy = pred.cy - gt.cy;
    Ok(EnclosureStats {
        iou,
        center_dist_sq: dx * dx + dy * dy,
        c_sq: cw * cw + ch * ch,
        cw_sq: cw * cw,
        ch_sq: ch * ch,
    })
}

/// Loss of one predicted box against one ground-truth box:
/// `1 - IoU + rho^2/c^2 + (w - w_gt)^2/Cw^2 + (h - h_gt)^2/Ch^2`,
/// with all denominators clamped at 1e-9.
pub fn eiou_loss(pred: &BBox, gt: &BBox) -> Result<(f64, EnclosureStats)> {
    let s = enclosure_stats(pred, gt)?;
    let dw = pred.w - gt.w;
    let dh = pred.h - gt.h;
    let loss = 1.0 - s.iou
        + s.center_dist_sq / s.c_sq.max(DENOM_CLAMP)
        + dw * dw / s.cw_sq.max(DENOM_CLAMP)
        + dh * dh / s.ch_sq.max(DENOM_CLAMP);
    Ok((loss, s))
}

/// EIoU scaled by `IoU^gamma`, which down-weights low-overlap pairs
/// (and zeroes disjoint ones entirely).
pub fn focal_eiou_loss(pred: &BBox, gt: &BBox, gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::Config(format!("focal gamma must be >= 0, got {gamma}")));
    }
    let (loss, s) = eiou_loss(pred, gt)?;
    Ok(s.iou.powf(gamma) * loss)
}

/// Baseline: `1 - IoU + rho^2/c^2 + alpha * v` with the aspect-ratio term
/// `v = (4/pi^2)(atan(w_gt/h_gt) - atan(w/h))^2`.
pub fn ciou_loss(pred: &BBox, gt: &BBox) -> Result<f64> {
    let s = enclosure_stats(pred, gt)?;
    let v = 4.0 / (std::f64::consts::PI * std::f64::consts::PI)
        * ((gt.w / gt.h).atan() - (pred.w / pred.h).atan()).powi(2);
    let alpha = if v == 0.0 { 0.0 } else { v / ((1.0 - s.iou) + v) };
    Ok(1.0 - s.iou + s.center_dist_sq / s.c_sq.max(DENOM_CLAMP) + alpha * v)
}

/// Partial derivatives of [`eiou_loss`] w.r.t. the predicted box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EiouGrad {
    pub d_cx: f64,
    pub d_cy: f64,
    pub d_w: f64,
    pub d_h: f64,
}

impl EiouGrad {
    pub fn as_array(&self) -> [f64; 4] {
        [self.d_cx, self.d_cy, self.d_w, self.d_h]
    }
}

/// Analytic gradient of the EIoU loss w.r.t. `(cx, cy, w, h)` of `pred`.
///
/// At edge-touching configurations the loss has kinks (min/max switches);
/// there the subgradient of the active branch is returned.
pub fn eiou_grad(pred: &BBox, gt: &BBox) -> Result<EiouGrad> {
    pred.check_extents()?;
    gt.check_extents()?;
    let (px1, py1, px2, py2) = pred.corners();
    let (gx1, gy1, gx2, gy2) = gt.corners();

    // 1D overlap helper: extent, and d(extent)/d(center), d(extent)/d(size)
    // for the predicted interval. lo = max(p_lo, g_lo), hi = min(p_hi, g_hi).
    let overlap = |plo: f64, phi: f64, glo: f64, ghi: f64| -> (f64, f64, f64) {
        let lo = plo.max(glo);
        let hi = phi.min(ghi);
        let ext = hi - lo;
        if ext <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let d_hi_center = if phi < ghi { 1.0 } else { 0.0 };
        let d_lo_center = if plo > glo { 1.0 } else { 0.0 };
        // d(phi)/dw = 1/2, d(plo)/dw = -1/2
        let d_ext_center = d_hi_center - d_lo_center;
        let d_ext_size = 0.5 * d_hi_center + 0.5 * d_lo_center;
        (ext, d_ext_center, d_ext_size)
    };
    let (iw, diw_dcx, diw_dw) = overlap(px1, px2, gx1, gx2);
    let (ih, dih_dcy, dih_dh) = overlap(py1, py2, gy1, gy2);

    let inter = iw * ih;
    let area_p = pred.area();
    let area_g = gt.area();
    let union = area_p + area_g - inter;

    // d(inter)/d(theta)
    let di = [
        diw_dcx * ih, // cx
        dih_dcy * iw, // cy
        diw_dw * ih,  // w
        dih_dh * iw,  // h
    ];
    // d(area_p)/d(theta)
    let dap = [0.0, 0.0, pred.h, pred.w];
    // IoU = I/U, U = Ap + Ag - I
    let mut d_iou = [0.0; 4];
    for t in 0..4 {
        let du = dap[t] - di[t];
        d_iou[t] = (di[t] * union - inter * du) / (union * union);
    }

    // enclosing extents
    let cw = px2.max(gx2) - px1.min(gx1);
    let ch = py2.max(gy2) - py1.min(gy1);
    let d_cw_dcx = (if px2 > gx2 { 1.0 } else { 0.0 }) - (if px1 < gx1 { 1.0 } else { 0.0 });
    let d_cw_dw = 0.5 * (if px2 > gx2 { 1.0 } else { 0.0 }) + 0.5 * (if px1 < gx1 { 1.0 } else { 0.0 });
    let d_ch_dcy = (if py2 > gy2 { 1.0 } else { 0.0 }) - (if py1 < gy1 { 1.0 } else { 0.0 });
    let d_ch_dh = 0.5 * (if py2 > gy2 { 1.0 } else { 0.0 }) + 0.5 * (if py1 < gy1 { 1.0 } else { 0.0 });

    let rho_sq = (pred.cx - gt.cx).powi(2) + (pred.cy - gt.cy).powi(2);
    let c_sq = cw * cw + ch * ch;
    let c_sq_cl = c_sq.max(DENOM_CLAMP);
    let clamped_c = c_sq < DENOM_CLAMP;

    // rho^2 / c^2 term; when the clamp is active the denominator is constant
    let d_rho = [
        2.0 * (pred.cx - gt.cx),
        2.0 * (pred.cy - gt.cy),
        0.0,
        0.0,
    ];
    let d_csq = if clamped_c {
        [0.0; 4]
    } else {
        [
            2.0 * cw * d_cw_dcx,
            2.0 * ch * d_ch_dcy,
            2.0 * cw * d_cw_dw,
            2.0 * ch * d_ch_dh,
        ]
    };
    let mut d_dist = [0.0; 4];
    for t in 0..4 {
        d_dist[t] = (d_rho[t] * c_sq_cl - rho_sq * d_csq[t]) / (c_sq_cl * c_sq_cl);
    }

    // (w - wg)^2 / Cw^2 term
    let dw = pred.w - gt.w;
    let cw_sq = cw * cw;
    let cw_sq_cl = cw_sq.max(DENOM_CLAMP);
    let clamped_cw = cw_sq < DENOM_CLAMP;
    let d_cwsq = |d_cw: f64| if clamped_cw { 0.0 } else { 2.0 * cw * d_cw };
    let mut d_asp_w = [0.0; 4];
    d_asp_w[0] = -dw * dw * d_cwsq(d_cw_dcx) / (cw_sq_cl * cw_sq_cl);
    d_asp_w[2] = (2.0 * dw * cw_sq_cl - dw * dw * d_cwsq(d_cw_dw)) / (cw_sq_cl * cw_sq_cl);

    // (h - hg)^2 / Ch^2 term
    let dh = pred.h - gt.h;
    let ch_sq = ch * ch;
    let ch_sq_cl = ch_sq.max(DENOM_CLAMP);
    let clamped_ch = ch_sq < DENOM_CLAMP;
    let d_chsq = |d_ch: f64| if clamped_ch { 0.0 } else { 2.0 * ch * d_ch };
    let mut d_asp_h = [0.0; 4];
    d_asp_h[1] = -dh * dh * d_chsq(d_ch_dcy) / (ch_sq_cl * ch_sq_cl);
    d_asp_h[3] = (2.0 * dh * ch_sq_cl - dh * dh * d_chsq(d_ch_dh)) / (ch_sq_cl * ch_sq_cl);

    let g = |t: usize| -d_iou[t] + d_dist[t] + d_asp_w[t] + d_asp_h[t];
    Ok(EiouGrad { d_cx: g(0), d_cy: g(1), d_w: g(2), d_h: g(3) })
}

/// Greedy non-maximum suppression: keep boxes in descending confidence
/// (ties broken by input index) and suppress any remaining box whose IoU
/// with a kept box exceeds `iou_thr`.
pub fn nms(dets: &DetectionSet, iou_thr: f64) -> Result<DetectionSet> {
    dets.validate()?;
    let mut order: Vec<usize> = (0..dets.boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = dets.boxes[a].confidence.unwrap();
        let cb = dets.boxes[b].confidence.unwrap();
        cb.partial_cmp(&ca).unwrap().then(a.cmp(&b))
    });
    let mut suppressed = vec![false; dets.boxes.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&dets.boxes[i], &dets.boxes[j])? > iou_thr {
                suppressed[j] = true;
            }
        }
    }
    // deterministic output: original input order among the kept boxes
    kept.sort_unstable();
    Ok(DetectionSet {
        image_id: dets.image_id.clone(),
        boxes: kept.into_iter().map(|i| dets.boxes[i]).collect(),
    })
}
