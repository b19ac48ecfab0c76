//! Corpus-level linting and auto-fix.
//!
//! Per-image failures become report notes instead of aborting the run.
//! Fixes apply in rule order tightness -> disparity -> diagonal ->
//! unlabeled; once a box has been replaced, later findings against the
//! original box are skipped.

use std::collections::BTreeMap;

use crate::boxgeom::{AnnotationSet, BBox};
use crate::dataset::Sample;
use crate::error::Result;
use crate::lint::rules::{
    check_diagonal_cluster, check_scale_disparity, check_tightness, find_unlabeled,
    median_box_area_px,
};
use crate::lint::stain::{stain_segment, StainMasks};
use crate::lint::{LintConfig, LintFinding, LintRule};

#[derive(Debug, Clone, Default)]
pub struct LintReport {
    pub findings: Vec<LintFinding>,
    /// Per-image problems that did not stop the run.
    pub errors: Vec<String>,
    pub median_box_area_px: Option<f64>,
    pub images_checked: usize,
    pub boxes_checked: usize,
}

impl LintReport {
    pub fn counts_by_rule(&self) -> BTreeMap<&'static str, usize> {
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        for f in &self.findings {
            let key = match f.rule {
                LintRule::LooseBox => "LOOSE_BOX",
                LintRule::ScaleDisparity => "SCALE_DISPARITY",
                LintRule::UnlabeledCell => "UNLABELED_CELL",
                LintRule::DiagonalCluster => "DIAGONAL_CLUSTER",
            };
            *counts.entry(key).or_default() += 1;
        }
        counts
    }

    /// One finding per line, JSON.
    pub fn findings_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&serde_json::to_string(f)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn summary_text(&self) -> String {
        let mut out = format!(
            "checked {} images, {} boxes\n",
            self.images_checked, self.boxes_checked
        );
        if let Some(m) = self.median_box_area_px {
            out.push_str(&format!("median box area: {m:.1} px^2\n"));
        }
        let counts = self.counts_by_rule();
        if counts.is_empty() {
            out.push_str("no findings\n");
        }
        for (rule, n) in counts {
            out.push_str(&format!("{rule}: {n}\n"));
        }
        for e in &self.errors {
            out.push_str(&format!("note: {e}\n"));
        }
        out
    }
}

fn pixel_area(b: &BBox, w: u32, h: u32) -> f64 {
    (b.w * w as f64) * (b.h * h as f64)
}

/// Run all four rules over the corpus. Deterministic: samples are
/// processed in image-id order and findings inherit that order.
pub fn lint_dataset(samples: &[Sample], cfg: &LintConfig) -> Result<LintReport> {
    cfg.colors.validate()?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].image_id.cmp(&samples[b].image_id));

    let mut report = LintReport::default();
    let mut masks_by_sample: Vec<Option<StainMasks>> = vec![None; samples.len()];
    let mut areas = Vec::new();
    for &i in &order {
        let s = &samples[i];
        match s.raster() {
            Ok(raster) => {
                let masks = stain_segment(&raster, &cfg.colors);
                for b in &s.boxes {
                    areas.push(pixel_area(b, masks.width, masks.height));
                }
                masks_by_sample[i] = Some(masks);
            }
            Err(e) => report.errors.push(format!("{}: {e}", s.image_id)),
        }
    }

    let median = match median_box_area_px(&areas) {
        Ok(m) => Some(m),
        Err(e) => {
            report.errors.push(format!("scale-disparity skipped: {e}"));
            None
        }
    };
    report.median_box_area_px = median;

    for &i in &order {
        let Some(masks) = &masks_by_sample[i] else { continue };
        let s = &samples[i];
        report.images_checked += 1;
        report.boxes_checked += s.boxes.len();
        for b in &s.boxes {
            if let Some(f) = check_tightness(b, masks, cfg.margin_thr_px, &s.image_id) {
                report.findings.push(f);
            }
            if let Some(m) = median {
                if let Some(f) =
                    check_scale_disparity(b, masks, m, cfg.ratio_thr, &s.image_id)
                {
                    report.findings.push(f);
                }
            }
            if let Some(f) =
                check_diagonal_cluster(b, masks, cfg.fill_thr, cfg.elong_thr, &s.image_id)
            {
                report.findings.push(f);
            }
        }
        report.findings.extend(find_unlabeled(
            masks,
            &s.boxes,
            cfg.min_area_px,
            cfg.coverage_thr,
            &s.image_id,
        ));
    }
    Ok(report)
}

/// Apply suggested fixes, producing a corrected annotation set per image.
pub fn auto_fix(samples: &[Sample], report: &LintReport) -> Vec<AnnotationSet> {
    let mut out = Vec::with_capacity(samples.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].image_id.cmp(&samples[b].image_id));
    for &i in &order {
        let s = &samples[i];
        let mut boxes: Vec<BBox> = s.boxes.clone();
        let image_findings: Vec<&LintFinding> = report
            .findings
            .iter()
            .filter(|f| f.image_id == s.image_id)
            .collect();
        for rule in [
            LintRule::LooseBox,
            LintRule::ScaleDisparity,
            LintRule::DiagonalCluster,
        ] {
            for f in image_findings.iter().filter(|f| f.rule == rule) {
                let target = &f.boxes[0];
                if let Some(pos) = boxes.iter().position(|b| b == target) {
                    boxes.remove(pos);
                    boxes.extend(f.suggested_fix.iter().copied());
                }
            }
        }
        for f in image_findings.iter().filter(|f| f.rule == LintRule::UnlabeledCell) {
            boxes.extend(f.suggested_fix.iter().copied());
        }
        out.push(AnnotationSet { image_id: s.image_id.clone(), boxes });
    }
    out
}
