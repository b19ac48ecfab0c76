//! Decode the head map into scored boxes: sigmoid objectness as the
//! confidence, per-cell offsets into normalized coordinates, a confidence
//! floor, then greedy NMS.

use serde::{Deserialize, Serialize};

use crate::boxgeom::{nms, BBox, DetectionSet};
use crate::detector::model::{Detector, HEAD_CHANNELS};
use crate::error::Result;
use crate::tensor::{kernels, Element, Graph, Tensor};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PredictConfig {
    /// Minimum confidence to keep a decoded box.
    pub conf_thr: f64,
    /// NMS IoU threshold.
    pub nms_thr: f64,
    /// Probability threshold for downstream confusion-matrix/report
    /// filtering; not applied during decoding.
    pub prob_thr: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { conf_thr: 0.001, nms_thr: 0.60, prob_thr: 0.5 }
    }
}

/// Run the detector on one `[3, in, in]` image tensor.
pub fn predict<T: Element>(
    model: &Detector<T>,
    image: &Tensor<T>,
    image_id: &str,
    cfg: &PredictConfig,
) -> Result<DetectionSet> {
    let in_sz = model.cfg.input_size;
    let batched = image.reshape(&[1, 3, in_sz, in_sz])?;
    let mut g = Graph::new();
    let x = g.leaf(batched);
    let ids = model.register(&mut g);
    let head = model.forward(&mut g, x, &ids)?;
    let head = g.value(head).to_f64();

    let grid = model.cfg.grid();
    let cells = grid * grid;
    let inv = 1.0 / grid as f64;
    let mut boxes = Vec::new();
    for row in 0..grid {
        for col in 0..grid {
            let at = |ch: usize| head.data()[ch * cells + row * grid + col];
            let conf = kernels::sigmoid(at(0));
            if conf < cfg.conf_thr {
                continue;
            }
            let cx = (col as f64 + kernels::sigmoid(at(1))) * inv;
            let cy = (row as f64 + kernels::sigmoid(at(2))) * inv;
            let w = kernels::sigmoid(at(3));
            let h = kernels::sigmoid(at(4));
            // clip corners to the image
            let x1 = (cx - w / 2.0).max(0.0);
            let y1 = (cy - h / 2.0).max(0.0);
            let x2 = (cx + w / 2.0).min(1.0);
            let y2 = (cy + h / 2.0).min(1.0);
            if x2 <= x1 || y2 <= y1 {
                continue;
            }
            boxes.push(BBox::from_corners(x1, y1, x2, y2).with_confidence(conf));
        }
    }
    debug_assert_eq!(HEAD_CHANNELS, 5);
    nms(&DetectionSet { image_id: image_id.to_string(), boxes }, cfg.nms_thr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::model::DetectorConfig;
    use crate::detector::train::image_to_tensor;
    use crate::synth::{generate_slide, SlideSpec};

    fn test_image() -> Tensor<f32> {
        let mut spec = SlideSpec::new(128, 128, 42);
        spec.dual_positive = 3;
        spec.clusters = 0;
        let slide = generate_slide(&spec, "p").unwrap();
        image_to_tensor(&slide.image)
    }

    #[test]
    fn conf_threshold_one_empties_the_output() {
        let model = Detector::<f32>::build(DetectorConfig::default(), 1).unwrap();
        let cfg = PredictConfig { conf_thr: 1.0, ..PredictConfig::default() };
        let out = predict(&model, &test_image(), "p", &cfg).unwrap();
        assert!(out.boxes.is_empty());
    }

    #[test]
    fn decoded_boxes_stay_inside_unit_square() {
        let model = Detector::<f32>::build(DetectorConfig::default(), 2).unwrap();
        let out = predict(&model, &test_image(), "p", &PredictConfig::default()).unwrap();
        assert!(!out.boxes.is_empty());
        for b in &out.boxes {
            let (x1, y1, x2, y2) = b.corners();
            assert!(x1 >= -1e-12 && y1 >= -1e-12 && x2 <= 1.0 + 1e-12 && y2 <= 1.0 + 1e-12);
            let c = b.confidence.unwrap();
            assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn kept_pairs_respect_the_nms_threshold() {
        let model = Detector::<f32>::build(DetectorConfig::default(), 3).unwrap();
        let out = predict(&model, &test_image(), "p", &PredictConfig::default()).unwrap();
        for i in 0..out.boxes.len() {
            for j in i + 1..out.boxes.len() {
                let v = crate::boxgeom::iou(&out.boxes[i], &out.boxes[j]).unwrap();
                assert!(v <= 0.60 + 1e-12);
            }
        }
    }
}
