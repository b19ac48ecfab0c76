//! Detection evaluation: greedy matching, precision/recall, PR curves,
//! interpolated average precision, mAP over an IoU-threshold range, a
//! detection-style confusion matrix, and cross-validated fold aggregation.
//!
//! Everything here is single-class. Matching is greedy in descending
//! confidence order: each detection takes the highest-IoU unmatched ground
//! truth with IoU at or above the threshold.

pub mod folds;
mod report;

pub use folds::{aggregate_folds, paired_t_test, FoldReport, MetricSummary, ReportedSummary};
pub use report::{pr_curve_csv, report_csv, report_json};

use serde::{Deserialize, Serialize};

use crate::boxgeom::{iou, AnnotationSet, BBox, DetectionSet};
use crate::error::{Error, Result};

/// Confusion counts for detection. True negatives are not applicable:
/// the background is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Per-detection outcome of matching, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `Some(gt_index)` if the detection is a true positive.
    pub matched_gt: Vec<Option<usize>>,
}

/// One point of a precision-recall curve, recorded at a confidence cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub confidence: f64,
}

/// Monotone-recall precision-recall curve.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Evaluation summary over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Precision at IoU 0.5 with detections filtered at the probability
    /// threshold (the reporting path; AP itself uses all detections).
    pub p: f64,
    pub r: f64,
    /// AP per IoU threshold, keyed by the formatted threshold ("0.50"..).
    pub ap_per_threshold: std::collections::BTreeMap<String, f64>,
    pub map50: f64,
    pub map5095: f64,
}

fn check_units(dets: &[&DetectionSet], gts: &[&AnnotationSet]) -> Result<()> {
    let mut units = None;
    let mut classes = std::collections::BTreeSet::new();
    for b in dets
        .iter()
        .flat_map(|d| d.boxes.iter())
        .chain(gts.iter().flat_map(|g| g.boxes.iter()))
    {
        match units {
            None => units = Some(b.units),
            Some(u) if u != b.units => {
                return Err(Error::Unit(
                    "mixed normalized and pixel boxes in one evaluation".into(),
                ))
            }
            _ => {}
        }
        classes.insert(b.class_id);
    }
    if classes.len() > 1 {
        return Err(Error::Protocol(format!(
            "single-class evaluation got class ids {classes:?}"
        )));
    }
    Ok(())
}

/// Sort order for detections: descending confidence, stable by index.
fn confidence_order(boxes: &[BBox]) -> Result<Vec<usize>> {
    for b in boxes {
        if b.confidence.is_none() {
            return Err(Error::Validation("detection without confidence".into()));
        }
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .confidence
            .unwrap()
            .partial_cmp(&boxes[a].confidence.unwrap())
            .unwrap()
            .then(a.cmp(&b))
    });
    Ok(order)
}

/// Greedy single-assignment matching of one image's detections to its
/// ground truths at an IoU threshold.
pub fn match_detections(
    dets: &DetectionSet,
    gts: &AnnotationSet,
    iou_thr: f64,
) -> Result<(MatchCounts, Assignment)> {
    check_units(&[dets], &[gts])?;
    let order = confidence_order(&dets.boxes)?;
    let mut gt_taken = vec![false; gts.boxes.len()];
    let mut matched_gt = vec![None; dets.boxes.len()];
    let mut counts = MatchCounts::default();
    for &di in &order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.boxes.iter().enumerate() {
            if gt_taken[gi] {
                continue;
            }
            let v = iou(&dets.boxes[di], gt)?;
            if v >= iou_thr {
                match best {
                    Some((_, bv)) if bv >= v => {}
                    _ => best = Some((gi, v)),
                }
            }
        }
        match best {
            Some((gi, _)) => {
                gt_taken[gi] = true;
                matched_gt[di] = Some(gi);
                counts.tp += 1;
            }
            None => counts.fp += 1,
        }
    }
    counts.fn_ = gts.boxes.len() - counts.tp;
    Ok((counts, Assignment { matched_gt }))
}

/// `p = tp/(tp+fp)`, `r = tp/(tp+fn)`, with `0/0` defined as 0.
pub fn precision_recall(c: &MatchCounts) -> (f64, f64) {
    let p = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
    let r = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    (p, r)
}

fn pair_images<'a>(
    dets: &'a [DetectionSet],
    gts: &'a [AnnotationSet],
) -> Result<Vec<(&'a DetectionSet, &'a AnnotationSet)>> {
    use std::collections::BTreeMap;
    let gt_by_id: BTreeMap<&str, &AnnotationSet> =
        gts.iter().map(|g| (g.image_id.as_str(), g)).collect();
    if gt_by_id.len() != gts.len() {
        return Err(Error::Protocol("duplicate image ids in ground truth".into()));
    }
    let mut pairs = Vec::new();
    for d in dets {
        match gt_by_id.get(d.image_id.as_str()) {
            Some(g) => pairs.push((d, *g)),
            None => {
                return Err(Error::Protocol(format!(
                    "detections for unknown image {:?}",
                    d.image_id
                )))
            }
        }
    }
    Ok(pairs)
}

/// Pooled, confidence-ranked TP/FP labels across a corpus, plus the total
/// ground-truth count. Labels are ordered by descending confidence with
/// ties broken by (image order, detection order).
fn pooled_labels(
    dets: &[DetectionSet],
    gts: &[AnnotationSet],
    iou_thr: f64,
) -> Result<(Vec<(f64, bool)>, usize)> {
    let det_refs: Vec<&DetectionSet> = dets.iter().collect();
    let gt_refs: Vec<&AnnotationSet> = gts.iter().collect();
    check_units(&det_refs, &gt_refs)?;
    let mut labels: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (img_idx, (d, g)) in pair_images(dets, gts)?.into_iter().enumerate() {
        let (_, assignment) = match_detections(d, g, iou_thr)?;
        for (di, m) in assignment.matched_gt.iter().enumerate() {
            labels.push((d.boxes[di].confidence.unwrap(), img_idx, di, m.is_some()));
        }
    }
    labels.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let n_gts = gts.iter().map(|g| g.boxes.len()).sum();
    Ok((labels.into_iter().map(|(c, _, _, tp)| (c, tp)).collect(), n_gts))
}

/// PR curve swept over the distinct confidence cutoffs of the pooled,
/// sorted detection list.
pub fn pr_curve(dets: &[DetectionSet], gts: &[AnnotationSet], iou_thr: f64) -> Result<PrCurve> {
    let (labels, n_gts) = pooled_labels(dets, gts, iou_thr)?;
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut i = 0usize;
    while i < labels.len() {
        let cutoff = labels[i].0;
        // consume the whole group of equal confidences
        while i < labels.len() && labels[i].0 == cutoff {
            tp += labels[i].1 as usize;
            i += 1;
        }
        let kept = i;
        let precision = tp as f64 / kept as f64;
        let recall = if n_gts == 0 { 0.0 } else { tp as f64 / n_gts as f64 };
        points.push(PrPoint { recall, precision, confidence: cutoff });
    }
    Ok(PrCurve { points })
}

/// 101-point interpolated AP: the precision envelope
/// `max{p(r') : r' >= r}` sampled at `r = 0.00, 0.01, ..., 1.00`.
pub fn ap_from_curve(curve: &PrCurve) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let best = curve
            .points
            .iter()
            .filter(|pt| pt.recall >= r)
            .map(|pt| pt.precision)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

/// Average precision over a corpus at one IoU threshold.
pub fn average_precision(
    dets: &[DetectionSet],
    gts: &[AnnotationSet],
    iou_thr: f64,
) -> Result<f64> {
    let n_gts: usize = gts.iter().map(|g| g.boxes.len()).sum();
    let n_dets: usize = dets.iter().map(|d| d.boxes.len()).sum();
    if n_gts == 0 && n_dets == 0 {
        return Ok(0.0);
    }
    Ok(ap_from_curve(&pr_curve(dets, gts, iou_thr)?))
}

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95 (exact decimals).
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Confidence filter used for the P/R cells of a report; AP is threshold-free.
pub const REPORT_CONF_THR: f64 = 0.5;

/// Full report: AP at each threshold in `iou_thresholds()`, their mean,
/// and P/R at IoU 0.5 with detections filtered at [`REPORT_CONF_THR`].
pub fn map_range(dets: &[DetectionSet], gts: &[AnnotationSet]) -> Result<EvalReport> {
    let mut ap_per_threshold = std::collections::BTreeMap::new();
    let mut sum = 0.0;
    let mut map50 = 0.0;
    for thr in iou_thresholds() {
        let ap = average_precision(dets, gts, thr)?;
        if thr == 0.5 {
            map50 = ap;
        }
        sum += ap;
        ap_per_threshold.insert(format!("{thr:.2}"), ap);
    }
    let mut counts = MatchCounts::default();
    for (d, g) in pair_images(dets, gts)? {
        let filtered = filter_by_confidence(d, REPORT_CONF_THR)?;
        let (c, _) = match_detections(&filtered, g, 0.5)?;
        counts.tp += c.tp;
        counts.fp += c.fp;
        counts.fn_ += c.fn_;
    }
    let (p, r) = precision_recall(&counts);
    Ok(EvalReport { p, r, ap_per_threshold, map50, map5095: sum / 10.0 })
}

fn filter_by_confidence(dets: &DetectionSet, conf_thr: f64) -> Result<DetectionSet> {
    dets.validate()?;
    Ok(DetectionSet {
        image_id: dets.image_id.clone(),
        boxes: dets
            .boxes
            .iter()
            .filter(|b| b.confidence.unwrap() >= conf_thr)
            .copied()
            .collect(),
    })
}

/// Confusion matrix rendered in the 2x2 binary layout; detections are
/// filtered at `conf_thr` first and the TN cell is open background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: MatchCounts,
    pub iou_thr: f64,
    pub conf_thr: f64,
    pub tn: &'static str,
}

pub const TN_NOT_APPLICABLE: &str = "n/a (open background)";

pub fn confusion_matrix(
    dets: &DetectionSet,
    gts: &AnnotationSet,
    iou_thr: f64,
    conf_thr: f64,
) -> Result<ConfusionMatrix> {
    let filtered = filter_by_confidence(dets, conf_thr)?;
    let (counts, _) = match_detections(&filtered, gts, iou_thr)?;
    Ok(ConfusionMatrix { counts, iou_thr, conf_thr, tn: TN_NOT_APPLICABLE })
}

impl ConfusionMatrix {
    /// Text rendering: actual class by row, prediction by column.
    pub fn render(&self) -> String {
        format!(
            "                 predicted positive | predicted negative\n\
             actual positive  {:>17} | {}\n\
             actual negative  {:>17} | {}\n",
            self.counts.tp, self.counts.fn_, self.counts.fp, self.tn
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn det(image: &str, boxes: Vec<BBox>) -> DetectionSet {
        DetectionSet { image_id: image.into(), boxes }
    }

    fn gt(image: &str, boxes: Vec<BBox>) -> AnnotationSet {
        AnnotationSet { image_id: image.into(), boxes }
    }

    fn b(cx: f64, cy: f64, w: f64, h: f64, conf: f64) -> BBox {
        BBox::norm(cx, cy, w, h).with_confidence(conf)
    }

    #[test]
    fn match_exact_hit() {
        let d = det("a", vec![b(0.5, 0.5, 0.2, 0.2, 0.9)]);
        let g = gt("a", vec![BBox::norm(0.5, 0.5, 0.2, 0.2)]);
        let (c, a) = match_detections(&d, &g, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (1, 0, 0));
        assert_eq!(a.matched_gt, vec![Some(0)]);
    }

    #[test]
    fn match_single_assignment_rule() {
        let d = det(
            "a",
            vec![b(0.5, 0.5, 0.2, 0.2, 0.9), b(0.5, 0.5, 0.2, 0.2, 0.8)],
        );
        let g = gt("a", vec![BBox::norm(0.5, 0.5, 0.2, 0.2)]);
        let (c, a) = match_detections(&d, &g, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 0));
        assert_eq!(a.matched_gt, vec![Some(0), None]);
    }

    #[test]
    fn match_counts_all_misses() {
        let d = det("a", vec![]);
        let g = gt(
            "a",
            vec![BBox::norm(0.2, 0.2, 0.1, 0.1), BBox::norm(0.8, 0.8, 0.1, 0.1)],
        );
        let (c, _) = match_detections(&d, &g, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 2));
    }

    #[test]
    fn match_rejects_mixed_units() {
        let d = det("a", vec![b(0.5, 0.5, 0.2, 0.2, 0.9)]);
        let g = gt("a", vec![BBox::pixel(100.0, 100.0, 40.0, 40.0)]);
        assert!(matches!(match_detections(&d, &g, 0.5), Err(Error::Unit(_))));
    }

    #[test]
    fn precision_recall_cases() {
        assert_eq!(precision_recall(&MatchCounts { tp: 3, fp: 1, fn_: 2 }), (0.75, 0.6));
        assert_eq!(precision_recall(&MatchCounts::default()), (0.0, 0.0));
        // percentage formatting used by the reference tables
        let (p, r) = (0.857f64, 0.843f64);
        assert_eq!(format!("{:.1}", p * 100.0), "85.7");
        assert_eq!(format!("{:.1}", r * 100.0), "84.3");
    }

    #[test]
    fn ap_perfect_single_detection() {
        let d = vec![det("a", vec![b(0.5, 0.5, 0.2, 0.2, 0.9)])];
        let g = vec![gt("a", vec![BBox::norm(0.5, 0.5, 0.2, 0.2)])];
        assert_eq!(average_precision(&d, &g, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn ap_fp_above_tp_halves_precision_envelope() {
        let d = vec![det(
            "a",
            vec![b(0.1, 0.1, 0.05, 0.05, 0.9), b(0.5, 0.5, 0.2, 0.2, 0.8)],
        )];
        let g = vec![gt("a", vec![BBox::norm(0.5, 0.5, 0.2, 0.2)])];
        assert_eq!(average_precision(&d, &g, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn ap_no_gts_no_dets_is_zero() {
        let d = vec![det("a", vec![])];
        let g = vec![gt("a", vec![])];
        assert_eq!(average_precision(&d, &g, 0.5).unwrap(), 0.0);
    }

    /// Brute-force AP: re-run full matching at every distinct confidence
    /// cutoff to get the curve points, then apply the same 101-point
    /// interpolation definition.
    fn brute_force_ap(dets: &DetectionSet, gts: &AnnotationSet, iou_thr: f64) -> f64 {
        let mut cutoffs: Vec<f64> = dets.boxes.iter().map(|b| b.confidence.unwrap()).collect();
        cutoffs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        cutoffs.dedup();
        let n_gts = gts.boxes.len();
        let mut points = Vec::new();
        for cutoff in cutoffs {
            let subset = DetectionSet {
                image_id: dets.image_id.clone(),
                boxes: dets
                    .boxes
                    .iter()
                    .filter(|b| b.confidence.unwrap() >= cutoff)
                    .copied()
                    .collect(),
            };
            let (c, _) = match_detections(&subset, gts, iou_thr).unwrap();
            let kept = subset.boxes.len();
            let precision = c.tp as f64 / kept as f64;
            let recall = if n_gts == 0 { 0.0 } else { c.tp as f64 / n_gts as f64 };
            points.push(PrPoint { recall, precision, confidence: cutoff });
        }
        ap_from_curve(&PrCurve { points })
    }

    fn random_instance(rng: &mut ChaCha12Rng) -> (DetectionSet, AnnotationSet) {
        let n_dets = rng.gen_range(0..=5);
        let n_gts = rng.gen_range(0..=3);
        let gts: Vec<BBox> = (0..n_gts)
            .map(|_| {
                BBox::norm(
                    rng.gen_range(0.2..0.8),
                    rng.gen_range(0.2..0.8),
                    rng.gen_range(0.05..0.3),
                    rng.gen_range(0.05..0.3),
                )
            })
            .collect();
        let dets: Vec<BBox> = (0..n_dets)
            .map(|_| {
                // half the detections perturb a gt, half are random
                let conf = if rng.gen_bool(0.3) {
                    // exercise tied confidences as well
                    0.5
                } else {
                    rng.gen_range(0.0..1.0)
                };
                if !gts.is_empty() && rng.gen_bool(0.6) {
                    let base = gts[rng.gen_range(0..gts.len())];
                    BBox::norm(
                        base.cx + rng.gen_range(-0.05..0.05),
                        base.cy + rng.gen_range(-0.05..0.05),
                        (base.w + rng.gen_range(-0.03..0.03)).max(0.01),
                        (base.h + rng.gen_range(-0.03..0.03)).max(0.01),
                    )
                    .with_confidence(conf)
                } else {
                    BBox::norm(
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.05..0.3),
                        rng.gen_range(0.05..0.3),
                    )
                    .with_confidence(conf)
                }
            })
            .collect();
        (det("a", dets), gt("a", gts))
    }

    #[test]
    fn ap_equals_brute_force_cutoff_enumeration() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..1500 {
            let (d, g) = random_instance(&mut rng);
            let fast = average_precision(
                std::slice::from_ref(&d),
                std::slice::from_ref(&g),
                0.5,
            )
            .unwrap();
            let slow = if d.boxes.is_empty() && g.boxes.is_empty() {
                0.0
            } else {
                brute_force_ap(&d, &g, 0.5)
            };
            assert_eq!(fast, slow, "dets {:?} gts {:?}", d.boxes, g.boxes);
        }
    }

    #[test]
    fn ap_invariant_under_monotone_confidence_transform() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for _ in 0..200 {
            let (d, g) = random_instance(&mut rng);
            let base = average_precision(std::slice::from_ref(&d), std::slice::from_ref(&g), 0.5)
                .unwrap();
            let mut warped = d.clone();
            for b in &mut warped.boxes {
                // strictly monotone transform of confidence
                let c = b.confidence.unwrap();
                b.confidence = Some(0.1 + 0.8 * (c / 2.0 + 0.1).sqrt());
            }
            let after =
                average_precision(std::slice::from_ref(&warped), std::slice::from_ref(&g), 0.5)
                    .unwrap();
            assert_eq!(base, after);
        }
    }

    #[test]
    fn trailing_fp_never_increases_ap() {
        let mut rng = ChaCha12Rng::seed_from_u64(321);
        for _ in 0..200 {
            let (d, g) = random_instance(&mut rng);
            let base = average_precision(std::slice::from_ref(&d), std::slice::from_ref(&g), 0.5)
                .unwrap();
            let min_conf = d
                .boxes
                .iter()
                .map(|b| b.confidence.unwrap())
                .fold(1.0, f64::min);
            let mut extended = d.clone();
            extended
                .boxes
                .push(b(0.95, 0.95, 0.02, 0.02, (min_conf - 0.05).max(0.0)));
            let after = average_precision(
                std::slice::from_ref(&extended),
                std::slice::from_ref(&g),
                0.5,
            )
            .unwrap();
            assert!(after <= base + 1e-12);
        }
    }

    #[test]
    fn match_count_identities() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..300 {
            let (d, g) = random_instance(&mut rng);
            let (c, _) = match_detections(&d, &g, 0.5).unwrap();
            assert_eq!(c.tp + c.fn_, g.boxes.len());
            assert_eq!(c.tp + c.fp, d.boxes.len());
        }
    }

    #[test]
    fn map_range_perfect_detections() {
        let d = vec![det("a", vec![b(0.5, 0.5, 0.2, 0.2, 0.9)])];
        let g = vec![gt("a", vec![BBox::norm(0.5, 0.5, 0.2, 0.2)])];
        let rep = map_range(&d, &g).unwrap();
        assert_eq!(rep.map50, 1.0);
        assert_eq!(rep.map5095, 1.0);
        assert_eq!((rep.p, rep.r), (1.0, 1.0));
        assert_eq!(rep.ap_per_threshold["0.50"], rep.map50);
    }

    #[test]
    fn map_range_iou_point_six_steps_at_threshold() {
        // boxes built so IoU is exactly 0.6: inter 0.75x1, union 1.25x1
        let d = vec![det("a", vec![b(0.75, 0.5, 1.0, 1.0, 0.9)])];
        let g = vec![gt("a", vec![BBox::norm(0.5, 0.5, 1.0, 1.0)])];
        let rep = map_range(&d, &g).unwrap();
        assert_eq!(rep.ap_per_threshold["0.50"], 1.0);
        assert_eq!(rep.ap_per_threshold["0.60"], 1.0);
        assert_eq!(rep.ap_per_threshold["0.65"], 0.0);
        assert!((rep.map5095 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn map_range_empty_detections() {
        let d = vec![det("a", vec![])];
        let g = vec![gt("a", vec![BBox::norm(0.5, 0.5, 0.2, 0.2)])];
        let rep = map_range(&d, &g).unwrap();
        assert_eq!(rep.map50, 0.0);
        assert_eq!(rep.map5095, 0.0);
        assert_eq!((rep.p, rep.r), (0.0, 0.0));
    }

    #[test]
    fn map5095_never_exceeds_map50_on_random_corpus() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (d, g) = random_instance(&mut rng);
            let rep = map_range(std::slice::from_ref(&d), std::slice::from_ref(&g)).unwrap();
            assert!(rep.map5095 <= rep.map50 + 1e-12);
        }
    }

    #[test]
    fn confusion_matrix_filters_then_matches() {
        let g = gt("a", vec![BBox::norm(0.5, 0.5, 0.2, 0.2)]);
        let perfect = det("a", vec![b(0.5, 0.5, 0.2, 0.2, 0.9)]);
        let cm = confusion_matrix(&perfect, &g, 0.5, 0.5).unwrap();
        assert_eq!((cm.counts.tp, cm.counts.fp, cm.counts.fn_), (1, 0, 0));
        assert!(cm.render().contains("n/a (open background)"));

        // a true-positive candidate below the confidence filter becomes a miss
        let low = det("a", vec![b(0.5, 0.5, 0.2, 0.2, 0.3)]);
        let cm = confusion_matrix(&low, &g, 0.5, 0.5).unwrap();
        assert_eq!((cm.counts.tp, cm.counts.fp, cm.counts.fn_), (0, 0, 1));

        // conf_thr 0 reproduces plain matching
        let mixed = det(
            "a",
            vec![b(0.5, 0.5, 0.2, 0.2, 0.3), b(0.9, 0.9, 0.05, 0.05, 0.2)],
        );
        let cm = confusion_matrix(&mixed, &g, 0.5, 0.0).unwrap();
        let (plain, _) = match_detections(&mixed, &g, 0.5).unwrap();
        assert_eq!(cm.counts, plain);
    }
}
