//! Dataset tooling: annotation ingestion, slide tiling, holdout and k-fold
//! splitting, and the augmentation trio (horizontal flip, mosaic, mixup).

mod annotations;
mod augment;
mod splits;
mod tiling;

pub use annotations::{
    load_annotations, load_detections, save_yolo_annotations, save_yolo_detections,
    validate_box, AnnotationFormat,
};
pub use augment::{derive_seed, hflip, mixup, mosaic};
pub use splits::{kfold_split, split_dataset, SplitKind, SplitPlan};
pub use tiling::tile_image;

use std::path::PathBuf;

use image::RgbImage;

use crate::boxgeom::BBox;
use crate::error::{Error, Result};
use crate::raster::load_raster;

/// Where a sample's pixels live.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    /// Annotation-only sample (splits and box-level work).
    None,
    Path(PathBuf),
    Raster(RgbImage),
}

/// One annotated image; boxes are normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub image: ImageSource,
    pub boxes: Vec<BBox>,
}

impl Sample {
    pub fn new(image_id: impl Into<String>, boxes: Vec<BBox>) -> Self {
        Self { image_id: image_id.into(), image: ImageSource::None, boxes }
    }

    pub fn with_raster(mut self, raster: RgbImage) -> Self {
        self.image = ImageSource::Raster(raster);
        self
    }

    /// Materialize the raster, loading from disk when necessary.
    pub fn raster(&self) -> Result<RgbImage> {
        match &self.image {
            ImageSource::Raster(img) => Ok(img.clone()),
            ImageSource::Path(p) => load_raster(p),
            ImageSource::None => Err(Error::Validation(format!(
                "sample {} has no image",
                self.image_id
            ))),
        }
    }
}
