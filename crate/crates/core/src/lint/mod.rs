//! Stain-aware annotation linter: four geometry checks over stain masks,
//! each with a machine-applicable suggested fix.

mod rules;
mod runner;
mod stain;

pub use rules::{
    check_diagonal_cluster, check_scale_disparity, check_tightness, find_unlabeled,
    median_box_area_px,
};
pub use runner::{auto_fix, lint_dataset, LintReport};
pub use stain::{connected_components, stain_segment, Component, StainMasks};

use serde::{Deserialize, Serialize};

use crate::boxgeom::BBox;
use crate::error::{Error, Result};

/// Which check produced a finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LintRule {
    #[serde(rename = "LOOSE_BOX")]
    LooseBox,
    #[serde(rename = "SCALE_DISPARITY")]
    ScaleDisparity,
    #[serde(rename = "UNLABELED_CELL")]
    UnlabeledCell,
    #[serde(rename = "DIAGONAL_CLUSTER")]
    DiagonalCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

/// One finding. `measurement` is rule-specific: worst side margin in
/// pixels (LOOSE_BOX), area ratio against the corpus median
/// (SCALE_DISPARITY), box-coverage fraction of the component
/// (UNLABELED_CELL), or the elongation ratio (DIAGONAL_CLUSTER).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: LintRule,
    pub image_id: String,
    /// Offending box(es); empty for UNLABELED_CELL.
    pub boxes: Vec<BBox>,
    pub measurement: f64,
    pub severity: Severity,
    /// LOOSE_BOX over zero stained pixels.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate_content: bool,
    /// Replacement boxes; empty means "remove the box".
    pub suggested_fix: Vec<BBox>,
}

/// Per-class HSV gates. Hue in degrees (no wraparound), saturation and
/// value in [0, 1]; all bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvRange {
    pub hue: (f64, f64),
    pub sat: (f64, f64),
    pub val: (f64, f64),
}

impl HsvRange {
    pub fn contains(&self, h: f64, s: f64, v: f64) -> bool {
        h >= self.hue.0
            && h <= self.hue.1
            && s >= self.sat.0
            && s <= self.sat.1
            && v >= self.val.0
            && v <= self.val.1
    }

    fn is_empty(&self) -> bool {
        self.hue.0 > self.hue.1 || self.sat.0 > self.sat.1 || self.val.0 > self.val.1
    }
}

/// Stain color gates; the defaults are tuned to the synthetic palette and
/// meant to be overridden for real slides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StainColorConfig {
    pub p16: HsvRange,
    pub ki67: HsvRange,
    pub negative: HsvRange,
}

impl Default for StainColorConfig {
    fn default() -> Self {
        Self {
            // magenta cytoplasm/nucleus stain
            p16: HsvRange { hue: (285.0, 345.0), sat: (0.45, 1.0), val: (0.25, 1.0) },
            // brownish-yellow nuclear stain
            ki67: HsvRange { hue: (15.0, 65.0), sat: (0.45, 1.0), val: (0.25, 1.0) },
            // blue-purple counterstained nuclei
            negative: HsvRange { hue: (215.0, 280.0), sat: (0.3, 1.0), val: (0.25, 1.0) },
        }
    }
}

impl StainColorConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [("p16", self.p16), ("ki67", self.ki67), ("negative", self.negative)];
        for (name, r) in ranges {
            if r.is_empty() {
                return Err(Error::Config(format!("empty color range for {name}")));
            }
        }
        for i in 0..ranges.len() {
            for j in i + 1..ranges.len() {
                let (a, b) = (ranges[i].1, ranges[j].1);
                if a.hue.0 <= b.hue.1 && b.hue.0 <= a.hue.1 {
                    return Err(Error::Config(format!(
                        "hue ranges for {} and {} overlap",
                        ranges[i].0, ranges[j].0
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Thresholds for the four rules; every knob has the documented default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LintConfig {
    pub margin_thr_px: usize,
    pub ratio_thr: f64,
    pub min_area_px: usize,
    pub coverage_thr: f64,
    pub fill_thr: f64,
    pub elong_thr: f64,
    pub colors: StainColorConfig,
}

impl Default for LintConfig {
    fn default() -> Self {
        Self {
            margin_thr_px: 4,
            ratio_thr: 20.0,
            min_area_px: 100,
            coverage_thr: 0.30,
            fill_thr: 0.35,
            elong_thr: 3.0,
            colors: StainColorConfig::default(),
        }
    }
}
