//! Training loop: SGD with weight decay, cosine learning-rate decay,
//! center-cell target assignment, weighted objectness BCE and a
//! boxgeom-backed box loss at positive cells.

use std::sync::Arc;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::boxgeom::{self, BBox};
use crate::dataset::Sample;
use crate::detector::model::{Detector, HEAD_CHANNELS};
use crate::error::{Error, Result};
use crate::tensor::{fe, CustomOp, Element, Graph, NodeId, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxLossKind {
    Iou,
    Eiou,
    FocalEiou,
    Ciou,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub box_loss: BoxLossKind,
    pub batch_size: usize,
    /// Weight of the box-loss component in the total.
    pub box_loss_weight: f64,
    /// BCE weight on positive cells, against 1.0 for background cells.
    pub objectness_pos_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr_init: 0.01,
            lr_final: 0.0001,
            momentum: 0.9,
            weight_decay: 0.0005,
            box_loss: BoxLossKind::Eiou,
            batch_size: 8,
            box_loss_weight: 5.0,
            objectness_pos_weight: 8.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.lr_final > self.lr_init {
            return Err(Error::Config(format!(
                "final lr {} must not exceed initial lr {}",
                self.lr_final, self.lr_init
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }

    /// Cosine decay between the two endpoints; hits `lr_final` exactly on
    /// the last step.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps <= 1 {
            return self.lr_final;
        }
        let t = step as f64 / (total_steps - 1) as f64;
        self.lr_final
            + 0.5 * (self.lr_init - self.lr_final) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub objectness_loss: f64,
    pub box_loss: f64,
    pub total_loss: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,epoch,lr,objectness_loss,box_loss,total_loss\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.epoch, r.lr, r.objectness_loss, r.box_loss, r.total_loss
            ));
        }
        out
    }

    pub fn first_total(&self) -> Option<f64> {
        self.rows.first().map(|r| r.total_loss)
    }

    pub fn last_total(&self) -> Option<f64> {
        self.rows.last().map(|r| r.total_loss)
    }
}

/// Normalize an RGB raster into a `[3, H, W]` tensor in [-0.5, 0.5].
pub fn image_to_tensor<T: Element>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = img.dimensions();
    let mut data = vec![T::zero(); 3 * (w * h) as usize];
    for (y, row) in img.rows().enumerate() {
        for (x, p) in row.enumerate() {
            for c in 0..3 {
                data[(c * h as usize + y) * w as usize + x] =
                    fe(p.0[c] as f64 / 255.0 - 0.5);
            }
        }
    }
    Tensor::new(vec![3, h as usize, w as usize], data).unwrap()
}

/// Convert samples to (image tensor, boxes) pairs, resizing rasters to the
/// detector input when needed.
pub fn samples_to_training_set<T: Element>(
    samples: &[Sample],
    input_size: usize,
) -> Result<Vec<(Tensor<T>, Vec<BBox>)>> {
    samples
        .iter()
        .map(|s| {
            let raster = s.raster()?;
            let raster = if raster.dimensions() == (input_size as u32, input_size as u32) {
                raster
            } else {
                image::imageops::resize(
                    &raster,
                    input_size as u32,
                    input_size as u32,
                    image::imageops::FilterType::Triangle,
                )
            };
            Ok((image_to_tensor(&raster), s.boxes.clone()))
        })
        .collect()
}

/// Box loss with an analytic (EIoU) or finite-difference backward, mean
/// over the positive cells. The forward value is computed in f64 box
/// space regardless of the training precision.
struct BoxLossOp {
    gts: Vec<BBox>,
    kind: BoxLossKind,
}

fn box_loss_value(kind: BoxLossKind, pred: &BBox, gt: &BBox) -> Result<f64> {
    Ok(match kind {
        BoxLossKind::Iou => 1.0 - boxgeom::iou(pred, gt)?,
        BoxLossKind::Eiou => boxgeom::eiou_loss(pred, gt)?.0,
        BoxLossKind::FocalEiou => boxgeom::focal_eiou_loss(pred, gt, 0.5)?,
        BoxLossKind::Ciou => boxgeom::ciou_loss(pred, gt)?,
    })
}

fn pred_row_to_box(data: &[f64]) -> BBox {
    BBox::norm(data[0], data[1], data[2].max(1e-6), data[3].max(1e-6))
}

impl<T: Element> CustomOp<T> for BoxLossOp {
    fn backward(&self, grad_out: &Tensor<T>, inputs: &[&Tensor<T>]) -> Vec<Tensor<T>> {
        let pred = inputs[0].to_f64();
        let p = self.gts.len();
        let g = grad_out.data()[0].to_f64().unwrap() / p as f64;
        let mut dx = vec![0.0f64; pred.len()];
        for (i, gt) in self.gts.iter().enumerate() {
            let row = &pred.data()[i * 4..(i + 1) * 4];
            let b = pred_row_to_box(row);
            let grads = match self.kind {
                BoxLossKind::Eiou => boxgeom::eiou_grad(&b, gt)
                    .map(|g| g.as_array())
                    .unwrap_or([0.0; 4]),
                _ => {
                    // central differences on the chosen loss
                    let mut out = [0.0; 4];
                    let eps = 1e-6;
                    for (t, slot) in out.iter_mut().enumerate() {
                        let mut plus = row.to_vec();
                        let mut minus = row.to_vec();
                        plus[t] += eps;
                        minus[t] -= eps;
                        let lp = box_loss_value(self.kind, &pred_row_to_box(&plus), gt)
                            .unwrap_or(0.0);
                        let lm = box_loss_value(self.kind, &pred_row_to_box(&minus), gt)
                            .unwrap_or(0.0);
                        *slot = (lp - lm) / (2.0 * eps);
                    }
                    out
                }
            };
            for t in 0..4 {
                dx[i * 4 + t] = g * grads[t];
            }
        }
        vec![Tensor::from_f64(&Tensor::new(vec![p, 4], dx).unwrap())]
    }

    fn name(&self) -> &'static str {
        "box_loss"
    }
}

struct BatchTargets<T: Element> {
    obj_targets: Tensor<T>,
    obj_weights: Tensor<T>,
    /// (batch index, cell row, cell col, gt box) per positive cell.
    positives: Vec<(usize, usize, usize, BBox)>,
}

/// The grid cell containing each box center is that box's positive cell;
/// when two centers land in one cell the first box wins.
fn assign_targets<T: Element>(
    boxes_per_image: &[&[BBox]],
    grid: usize,
    pos_weight: f64,
) -> BatchTargets<T> {
    let n = boxes_per_image.len();
    let mut obj_targets = Tensor::<T>::zeros(&[n, grid, grid]);
    let mut obj_weights = Tensor::<T>::full(&[n, grid, grid], T::one());
    let mut positives = Vec::new();
    for (ni, boxes) in boxes_per_image.iter().enumerate() {
        for b in boxes.iter() {
            let col = ((b.cx * grid as f64).floor() as usize).min(grid - 1);
            let row = ((b.cy * grid as f64).floor() as usize).min(grid - 1);
            let idx = (ni * grid + row) * grid + col;
            if obj_targets.data()[idx] != T::zero() {
                continue;
            }
            obj_targets.data_mut()[idx] = T::one();
            obj_weights.data_mut()[idx] = fe(pos_weight);
            positives.push((ni, row, col, *b));
        }
    }
    BatchTargets { obj_targets, obj_weights, positives }
}

/// Build the loss graph for one batch. Returns
/// (total, objectness, box) scalar nodes; `box` is `None` when the batch
/// has no positive cells.
fn batch_loss<T: Element>(
    g: &mut Graph<T>,
    model: &Detector<T>,
    ids: &[NodeId],
    images: NodeId,
    boxes_per_image: &[&[BBox]],
    tcfg: &TrainConfig,
) -> Result<(NodeId, NodeId, Option<NodeId>)> {
    let grid = model.cfg.grid();
    let n = boxes_per_image.len();
    let head = model.forward(g, images, ids)?; // [N, 5, S, S]
    let targets = assign_targets::<T>(boxes_per_image, grid, tcfg.objectness_pos_weight);

    // objectness channel
    let cells = grid * grid;
    let mut obj_map = vec![None; n * cells];
    for (o, slot) in obj_map.iter_mut().enumerate() {
        let ni = o / cells;
        let cell = o % cells;
        *slot = Some((ni * HEAD_CHANNELS) * cells + cell);
    }
    let obj_logits = g.remap(head, Arc::new(obj_map), &[n, grid, grid])?;
    let obj_loss = g.bce_with_logits(obj_logits, targets.obj_targets, targets.obj_weights)?;

    if targets.positives.is_empty() {
        return Ok((obj_loss, obj_loss, None));
    }

    // decode the box channels at each positive cell
    let p = targets.positives.len();
    let channel_map = |ch: usize| -> Arc<Vec<Option<usize>>> {
        let map = targets
            .positives
            .iter()
            .map(|(ni, row, col, _)| (ni * HEAD_CHANNELS + ch) * cells + row * grid + col)
            .map(Some)
            .collect::<Vec<_>>();
        Arc::new(map)
    };
    let tx = g.remap(head, channel_map(1), &[p])?;
    let ty = g.remap(head, channel_map(2), &[p])?;
    let tw = g.remap(head, channel_map(3), &[p])?;
    let th = g.remap(head, channel_map(4), &[p])?;
    let inv_grid = 1.0 / grid as f64;
    let sx = g.sigmoid(tx);
    let sx = g.scale(sx, inv_grid);
    let col_offsets = Tensor::from_vec(
        targets.positives.iter().map(|(_, _, col, _)| fe::<T>(*col as f64 * inv_grid)).collect(),
    );
    let bx = g.add_const(sx, col_offsets)?;
    let sy = g.sigmoid(ty);
    let sy = g.scale(sy, inv_grid);
    let row_offsets = Tensor::from_vec(
        targets.positives.iter().map(|(_, row, _, _)| fe::<T>(*row as f64 * inv_grid)).collect(),
    );
    let by = g.add_const(sy, row_offsets)?;
    let bw = g.sigmoid(tw);
    let bh = g.sigmoid(th);

    let cols: Vec<NodeId> = [bx, by, bw, bh]
        .into_iter()
        .map(|id| g.reshape(id, &[p, 1]))
        .collect::<Result<Vec<_>>>()?;
    let pred_boxes = g.concat(&cols, 1)?; // [P, 4]

    let gts: Vec<BBox> = targets.positives.iter().map(|(_, _, _, b)| *b).collect();
    let mut total_loss = 0.0;
    {
        let pred = g.value(pred_boxes).to_f64();
        for (i, gt) in gts.iter().enumerate() {
            let b = pred_row_to_box(&pred.data()[i * 4..(i + 1) * 4]);
            total_loss += box_loss_value(tcfg.box_loss, &b, gt)?;
        }
    }
    let box_loss = g.custom(
        vec![pred_boxes],
        Tensor::scalar(fe(total_loss / p as f64)),
        Arc::new(BoxLossOp { gts, kind: tcfg.box_loss }),
    );
    let weighted = g.scale(box_loss, tcfg.box_loss_weight);
    let total = g.add(obj_loss, weighted)?;
    Ok((total, obj_loss, Some(box_loss)))
}

/// Train in place; returns the per-step loss log. Deterministic per seed.
pub fn train<T: Element>(
    model: &mut Detector<T>,
    dataset: &[(Tensor<T>, Vec<BBox>)],
    tcfg: &TrainConfig,
) -> Result<TrainLog> {
    tcfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Protocol("training dataset is empty".into()));
    }
    let in_sz = model.cfg.input_size;
    for (img, _) in dataset {
        if img.shape() != [3, in_sz, in_sz] {
            return Err(Error::Shape(format!(
                "training image shape {:?} does not match input size {in_sz}",
                img.shape()
            )));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(tcfg.seed);
    let batches_per_epoch = dataset.len().div_ceil(tcfg.batch_size);
    let total_steps = tcfg.epochs * batches_per_epoch;
    let mut log = TrainLog::default();
    let mut velocity: Vec<Tensor<T>> = model
        .tensors()
        .iter()
        .map(|(_, t)| Tensor::zeros(t.shape()))
        .collect();
    let mut step = 0usize;
    for epoch in 0..tcfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            let lr = tcfg.lr_at(step, total_steps);
            // assemble the batch tensor
            let b = chunk.len();
            let mut data = Vec::with_capacity(b * 3 * in_sz * in_sz);
            for &i in chunk {
                data.extend_from_slice(dataset[i].0.data());
            }
            let images = Tensor::new(vec![b, 3, in_sz, in_sz], data)?;
            let boxes: Vec<&[BBox]> = chunk.iter().map(|&i| dataset[i].1.as_slice()).collect();

            let mut g = Graph::new();
            let images_id = g.leaf(images);
            let ids = model.register(&mut g);
            let (total, obj, boxl) = batch_loss(&mut g, model, &ids, images_id, &boxes, tcfg)?;
            let total_v = g.value(total).data()[0].to_f64().unwrap();
            let obj_v = g.value(obj).data()[0].to_f64().unwrap();
            let box_v = boxl
                .map(|id| g.value(id).data()[0].to_f64().unwrap())
                .unwrap_or(0.0);
            if !total_v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at step {step} (objectness {obj_v}, box {box_v})"
                )));
            }
            g.backward(total)?;
            let grads: Vec<Tensor<T>> = ids.iter().map(|&id| g.grad(id)).collect();
            let lr_t = fe::<T>(lr);
            let wd = fe::<T>(tcfg.weight_decay);
            let mu = fe::<T>(tcfg.momentum);
            for (((_, param), grad), vel) in model
                .tensors_mut()
                .into_iter()
                .zip(&grads)
                .zip(velocity.iter_mut())
            {
                for ((v, &gv), m) in param
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(vel.data_mut())
                {
                    *m = mu * *m + gv + wd * *v;
                    *v = *v - lr_t * *m;
                }
            }
            log.rows.push(TrainRow {
                step,
                epoch,
                lr,
                objectness_loss: obj_v,
                box_loss: box_v,
                total_loss: total_v,
            });
            step += 1;
        }
    }
    Ok(log)
}
