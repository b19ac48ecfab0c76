//! A deliberately minimal single-scale, anchor-free detector that wires
//! the four blocks together so they can be trained, ablated and evaluated
//! end to end on synthetic slides. This is not a full multi-scale
//! detector: one stem, one attention-block pair at the backbone tail,
//! one fusion node over {stem, post-attention} features, pyramid pooling
//! and channel/spatial gating before a 1x1 prediction head.

mod model;
mod predict;
mod train;

pub use model::{Detector, DetectorConfig};
pub use predict::{predict, PredictConfig};
pub use train::{image_to_tensor, samples_to_training_set, train, BoxLossKind, TrainConfig, TrainLog, TrainRow};
