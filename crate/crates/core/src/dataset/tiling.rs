//! Non-overlapping tiling of large slides into fixed-size patches.
//! Remainder tiles at the right/bottom edge are padded with white; boxes
//! are clipped per tile and dropped when less than a quarter of the
//! original area survives the clip.

use image::{Rgb, RgbImage};

use crate::boxgeom::BBox;
use crate::dataset::{ImageSource, Sample};
use crate::error::{Error, Result};

const DROP_AREA_FRACTION: f64 = 0.25;

pub fn tile_image(slide: &Sample, tile: u32) -> Result<Vec<Sample>> {
    if tile == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    let raster = slide.raster()?;
    let (w, h) = (raster.width(), raster.height());
    if w == 0 || h == 0 {
        return Err(Error::Validation("empty slide".into()));
    }
    let cols = w.div_ceil(tile);
    let rows = h.div_ceil(tile);
    let mut tiles = Vec::with_capacity((cols * rows) as usize);
    for row in 0..rows {
        for col in 0..cols {
            let x0 = col * tile;
            let y0 = row * tile;
            let mut img = RgbImage::from_pixel(tile, tile, Rgb([255, 255, 255]));
            for y in y0..(y0 + tile).min(h) {
                for x in x0..(x0 + tile).min(w) {
                    img.put_pixel(x - x0, y - y0, *raster.get_pixel(x, y));
                }
            }
            let mut boxes = Vec::new();
            for b in &slide.boxes {
                if let Some(clipped) = clip_box_to_tile(b, (w, h), (x0, y0), tile) {
                    boxes.push(clipped);
                }
            }
            tiles.push(Sample {
                image_id: format!("{}_r{row}_c{col}", slide.image_id),
                image: ImageSource::Raster(img),
                boxes,
            });
        }
    }
    Ok(tiles)
}

/// Clip a slide-normalized box to the tile rect; `None` when the retained
/// area falls under the drop threshold. The result is normalized to the
/// (padded) tile extent.
fn clip_box_to_tile(b: &BBox, slide: (u32, u32), origin: (u32, u32), tile: u32) -> Option<BBox> {
    let (sw, sh) = (slide.0 as f64, slide.1 as f64);
    let (x1, y1, x2, y2) = b.corners();
    let (px1, py1, px2, py2) = (x1 * sw, y1 * sh, x2 * sw, y2 * sh);
    let (tx1, ty1) = (origin.0 as f64, origin.1 as f64);
    let (tx2, ty2) = (tx1 + tile as f64, ty1 + tile as f64);
    let cx1 = px1.max(tx1);
    let cy1 = py1.max(ty1);
    let cx2 = px2.min(tx2);
    let cy2 = py2.min(ty2);
    if cx2 <= cx1 || cy2 <= cy1 {
        return None;
    }
    let original_area = (px2 - px1) * (py2 - py1);
    let clipped_area = (cx2 - cx1) * (cy2 - cy1);
    if clipped_area < DROP_AREA_FRACTION * original_area {
        return None;
    }
    let t = tile as f64;
    let mut out = BBox::from_corners(
        (cx1 - tx1) / t,
        (cy1 - ty1) / t,
        (cx2 - tx1) / t,
        (cy2 - ty1) / t,
    );
    out.class_id = b.class_id;
    out.confidence = b.confidence;
    Some(out)
}
