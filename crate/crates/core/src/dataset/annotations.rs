//! Annotation ingestion and emission.
//!
//! yolo-txt: one `<stem>.txt` per image, lines `class cx cy w h` in
//! normalized coordinates (detections add a trailing confidence). An image
//! file with the same stem (`.png`/`.ppm`) is attached when present.
//! coco-json: a single JSON file with `images` (pixel extents) and
//! `annotations` (pixel `[x, y, w, h]` boxes), converted to normalized
//! center form on load.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::boxgeom::{AnnotationSet, BBox, DetectionSet};
use crate::dataset::{ImageSource, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    YoloTxt,
    CocoJson,
}

/// Bound tolerance: values this far past [0, 1] are clamped, anything
/// farther is a validation error.
const CLIP_TOL: f64 = 1e-6;

/// Validate one normalized box: center inside the image, positive extents,
/// corners clipped to [0, 1].
pub fn validate_box(b: &BBox) -> Result<BBox> {
    for (name, v) in [("cx", b.cx), ("cy", b.cy), ("w", b.w), ("h", b.h)] {
        if !v.is_finite() {
            return Err(Error::Validation(format!("non-finite {name} in box")));
        }
    }
    if b.cx < -CLIP_TOL || b.cx > 1.0 + CLIP_TOL || b.cy < -CLIP_TOL || b.cy > 1.0 + CLIP_TOL {
        return Err(Error::Validation(format!(
            "box center ({}, {}) outside [0, 1]",
            b.cx, b.cy
        )));
    }
    if b.w <= 0.0 || b.h <= 0.0 || b.w > 1.0 + CLIP_TOL || b.h > 1.0 + CLIP_TOL {
        return Err(Error::Validation(format!(
            "box extents ({}, {}) outside (0, 1]",
            b.w, b.h
        )));
    }
    let (x1, y1, x2, y2) = b.corners();
    if x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 {
        return Ok(*b);
    }
    let (x1, y1, x2, y2) = (x1.clamp(0.0, 1.0), y1.clamp(0.0, 1.0), x2.clamp(0.0, 1.0), y2.clamp(0.0, 1.0));
    if x2 - x1 <= 0.0 || y2 - y1 <= 0.0 {
        return Err(Error::Validation("box collapses after clipping to [0, 1]".into()));
    }
    let mut out = BBox::from_corners(x1, y1, x2, y2);
    out.class_id = b.class_id;
    out.confidence = b.confidence;
    out.units = b.units;
    Ok(out)
}

fn parse_yolo_line(
    file: &Path,
    line_no: usize,
    line: &str,
    expect_conf: bool,
) -> Result<Option<BBox>> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let parts: Vec<&str> = line.split_whitespace().collect();
    let want = if expect_conf { 6 } else { 5 };
    if parts.len() != want {
        return Err(Error::Parse {
            file: file.to_path_buf(),
            line: line_no,
            msg: format!("expected {want} fields, got {}", parts.len()),
        });
    }
    let parse_f = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Parse {
            file: file.to_path_buf(),
            line: line_no,
            msg: format!("bad {what} {s:?}"),
        })
    };
    let class_id: u32 = parts[0].parse().map_err(|_| Error::Parse {
        file: file.to_path_buf(),
        line: line_no,
        msg: format!("bad class id {:?}", parts[0]),
    })?;
    let mut b = BBox::norm(
        parse_f(parts[1], "cx")?,
        parse_f(parts[2], "cy")?,
        parse_f(parts[3], "w")?,
        parse_f(parts[4], "h")?,
    )
    .with_class(class_id);
    if expect_conf {
        b = b.with_confidence(parse_f(parts[5], "confidence")?);
    }
    Ok(Some(b))
}

fn attach_image(dir: &Path, stem: &str) -> ImageSource {
    for ext in ["png", "ppm"] {
        let p = dir.join(format!("{stem}.{ext}"));
        if p.is_file() {
            return ImageSource::Path(p);
        }
    }
    ImageSource::None
}

fn yolo_label_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_yolo_dir(dir: &Path, expect_conf: bool) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for file in yolo_label_files(dir)? {
        let stem = file.file_stem().unwrap().to_string_lossy().to_string();
        let text = std::fs::read_to_string(&file)?;
        let mut boxes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if let Some(b) = parse_yolo_line(&file, i + 1, raw, expect_conf)? {
                boxes.push(validate_box(&b)?);
            }
        }
        samples.push(Sample { image_id: stem.clone(), image: attach_image(dir, &stem), boxes });
    }
    samples.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(samples)
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    bbox: [f64; 4],
    category_id: u32,
    #[serde(default)]
    score: Option<f64>,
}

fn load_coco(path: &Path) -> Result<Vec<Sample>> {
    let json_path = if path.is_dir() {
        let mut jsons: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
            .collect();
        jsons.sort();
        match jsons.len() {
            1 => jsons.pop().unwrap(),
            n => {
                return Err(Error::Validation(format!(
                    "expected exactly one .json file in {path:?}, found {n}"
                )))
            }
        }
    } else {
        path.to_path_buf()
    };
    let coco: CocoFile = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(
        &json_path,
    )?))?;
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for img in &coco.images {
        if img.width == 0 || img.height == 0 {
            return Err(Error::Validation(format!(
                "image {} has zero extent",
                img.file_name
            )));
        }
        let stem = Path::new(&img.file_name)
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        let mut boxes = Vec::new();
        for ann in coco.annotations.iter().filter(|a| a.image_id == img.id) {
            let [x, y, w, h] = ann.bbox;
            let mut b = BBox::norm(
                (x + w / 2.0) / img.width as f64,
                (y + h / 2.0) / img.height as f64,
                w / img.width as f64,
                h / img.height as f64,
            )
            .with_class(ann.category_id);
            if let Some(s) = ann.score {
                b = b.with_confidence(s);
            }
            boxes.push(validate_box(&b)?);
        }
        samples.push(Sample { image_id: stem.clone(), image: attach_image(dir, &stem), boxes });
    }
    samples.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(samples)
}

/// Load ground-truth annotations from a directory (yolo) or file/dir (coco),
/// validated, clipped and ordered by image id.
pub fn load_annotations<P: AsRef<Path>>(path: P, format: AnnotationFormat) -> Result<Vec<Sample>> {
    match format {
        AnnotationFormat::YoloTxt => load_yolo_dir(path.as_ref(), false),
        AnnotationFormat::CocoJson => load_coco(path.as_ref()),
    }
}

/// Load scored detections from yolo-txt with a sixth confidence column.
pub fn load_detections<P: AsRef<Path>>(path: P) -> Result<Vec<DetectionSet>> {
    let samples = load_yolo_dir(path.as_ref(), true)?;
    Ok(samples
        .into_iter()
        .map(|s| DetectionSet { image_id: s.image_id, boxes: s.boxes })
        .collect())
}

fn yolo_line(b: &BBox, with_conf: bool) -> String {
    let mut line = format!("{} {} {} {} {}", b.class_id, b.cx, b.cy, b.w, b.h);
    if with_conf {
        let _ = write!(line, " {}", b.confidence.unwrap_or(0.0));
    }
    line.push('\n');
    line
}

pub fn save_yolo_annotations<P: AsRef<Path>>(dir: P, set: &AnnotationSet) -> Result<()> {
    let path = dir.as_ref().join(format!("{}.txt", set.image_id));
    let mut out = String::new();
    for b in &set.boxes {
        out.push_str(&yolo_line(b, false));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn save_yolo_detections<P: AsRef<Path>>(dir: P, set: &DetectionSet) -> Result<()> {
    let path = dir.as_ref().join(format!("{}.txt", set.image_id));
    let mut out = String::new();
    for b in &set.boxes {
        out.push_str(&yolo_line(b, true));
    }
    std::fs::write(path, out)?;
    Ok(())
}
