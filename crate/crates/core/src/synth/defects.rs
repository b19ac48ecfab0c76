//! Controlled corruption of ground-truth annotations, with a log of every
//! change. The image itself is never touched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{AnnotationSet, BBox};
use crate::error::{Error, Result};
use crate::synth::{CellKind, CellRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectRule {
    /// Grow a box by a fixed margin on every side.
    Loosen,
    /// Replace a cluster's member boxes with one enclosing box.
    MergeMegabox,
    /// Drop the box of a peripheral (non-cluster) positive.
    DeleteLabel,
    /// Replace an oriented strip's member boxes with one axis-aligned box.
    DiagonalMegabox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefectSpec {
    pub loosen_rate: f64,
    pub merge_rate: f64,
    pub delete_rate: f64,
    pub diagonal_rate: f64,
    pub loosen_margin_px: f64,
    pub seed: u64,
}

impl DefectSpec {
    pub fn uniform(rate: f64, seed: u64) -> Self {
        Self {
            loosen_rate: rate,
            merge_rate: rate,
            delete_rate: rate,
            diagonal_rate: rate,
            loosen_margin_px: 10.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("loosen", self.loosen_rate),
            ("merge", self.merge_rate),
            ("delete", self.delete_rate),
            ("diagonal", self.diagonal_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} rate {r} outside [0, 1]")));
            }
        }
        if self.loosen_margin_px < 0.0 {
            return Err(Error::Config("loosen margin must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefectRecord {
    pub rule: DefectRule,
    pub image_id: String,
    pub original: Vec<BBox>,
    /// Empty for deletions.
    pub replacement: Vec<BBox>,
}

fn enclosing(boxes: &[BBox]) -> BBox {
    let mut x1 = f64::INFINITY;
    let mut y1 = f64::INFINITY;
    let mut x2 = f64::NEG_INFINITY;
    let mut y2 = f64::NEG_INFINITY;
    for b in boxes {
        let (bx1, by1, bx2, by2) = b.corners();
        x1 = x1.min(bx1);
        y1 = y1.min(by1);
        x2 = x2.max(bx2);
        y2 = y2.max(by2);
    }
    BBox::from_corners(x1, y1, x2, y2)
}

fn grow(b: &BBox, margin_x: f64, margin_y: f64) -> BBox {
    let (x1, y1, x2, y2) = b.corners();
    BBox::from_corners(
        (x1 - margin_x).max(0.0),
        (y1 - margin_y).max(0.0),
        (x2 + margin_x).min(1.0),
        (y2 + margin_y).min(1.0),
    )
}

/// Corrupt `annotations` per the spec. Requires the registry from the
/// generating call: annotation order matches the registry's dual-positive
/// cells, which is where cluster membership comes from.
pub fn inject_defects(
    annotations: &AnnotationSet,
    registry: &CellRegistry,
    spec: &DefectSpec,
    image_size: (u32, u32),
) -> Result<(AnnotationSet, Vec<DefectRecord>)> {
    spec.validate()?;
    let positives: Vec<_> = registry
        .cells
        .iter()
        .filter(|c| c.kind == CellKind::DualPositive)
        .collect();
    if positives.len() != annotations.boxes.len() {
        return Err(Error::Protocol(format!(
            "registry has {} positives but the annotation set has {} boxes",
            positives.len(),
            annotations.boxes.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut log = Vec::new();
    // per-box state: None = unchanged so far
    #[derive(Clone)]
    enum Fate {
        Keep,
        Removed,
        Loosened(BBox),
    }
    let mut fate = vec![Fate::Keep; annotations.boxes.len()];
    let mut megaboxes: Vec<BBox> = Vec::new();

    // clusters: merge or diagonal megabox
    for cluster_id in 0..registry.n_clusters {
        let member_idx: Vec<usize> = positives
            .iter()
            .enumerate()
            .filter(|(_, c)| c.cluster_id == Some(cluster_id))
            .map(|(i, _)| i)
            .collect();
        if member_idx.len() < 2 {
            continue;
        }
        let merge = rng.gen_bool(spec.merge_rate);
        let diagonal = !merge && rng.gen_bool(spec.diagonal_rate);
        if merge || diagonal {
            let originals: Vec<BBox> = member_idx.iter().map(|&i| annotations.boxes[i]).collect();
            let mega = enclosing(&originals);
            for &i in &member_idx {
                fate[i] = Fate::Removed;
            }
            megaboxes.push(mega);
            log.push(DefectRecord {
                rule: if merge { DefectRule::MergeMegabox } else { DefectRule::DiagonalMegabox },
                image_id: annotations.image_id.clone(),
                original: originals,
                replacement: vec![mega],
            });
        }
    }

    // peripheral deletions
    for (i, cell) in positives.iter().enumerate() {
        if cell.cluster_id.is_none()
            && matches!(fate[i], Fate::Keep)
            && rng.gen_bool(spec.delete_rate)
        {
            fate[i] = Fate::Removed;
            log.push(DefectRecord {
                rule: DefectRule::DeleteLabel,
                image_id: annotations.image_id.clone(),
                original: vec![annotations.boxes[i]],
                replacement: vec![],
            });
        }
    }

    // loosening of whatever is left
    let margin_x = spec.loosen_margin_px / image_size.0 as f64;
    let margin_y = spec.loosen_margin_px / image_size.1 as f64;
    for i in 0..annotations.boxes.len() {
        if matches!(fate[i], Fate::Keep) && rng.gen_bool(spec.loosen_rate) {
            let grown = grow(&annotations.boxes[i], margin_x, margin_y);
            fate[i] = Fate::Loosened(grown);
            log.push(DefectRecord {
                rule: DefectRule::Loosen,
                image_id: annotations.image_id.clone(),
                original: vec![annotations.boxes[i]],
                replacement: vec![grown],
            });
        }
    }

    let mut boxes = Vec::new();
    for (i, b) in annotations.boxes.iter().enumerate() {
        match &fate[i] {
            Fate::Keep => boxes.push(*b),
            Fate::Loosened(g) => boxes.push(*g),
            Fate::Removed => {}
        }
    }
    boxes.extend(megaboxes);
    Ok((AnnotationSet { image_id: annotations.image_id.clone(), boxes }, log))
}
