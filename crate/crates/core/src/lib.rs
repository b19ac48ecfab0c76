//! Algorithms for dual-stained cervical cell detection at desk scale:
//! box-regression losses and NMS, attention/fusion blocks with checked
//! gradients, mAP evaluation with cross-validation aggregation, dataset
//! splitting/augmentation, an annotation-quality linter, a synthetic slide
//! generator, and a small single-scale detector that ties them together.

pub mod blocks;
pub mod boxgeom;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod lint;
pub mod raster;
pub mod synth;
pub mod tensor;

pub use boxgeom::{AnnotationSet, BBox, DetectionSet, Units};
pub use error::{Error, Result};
pub use tensor::{Graph, NodeId, Param, Precision, Tensor};
