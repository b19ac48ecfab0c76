//! Channel-then-spatial multiplicative attention gating over NCHW maps.
//!
//! Channel gate: spatial mean pooling -> two affine layers (reduction `r`,
//! GELU between) -> sigmoid, broadcast over H,W. Spatial gate: two 7x7
//! convolutions (C -> C/r -> C, no activation between) -> sigmoid.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, NodeId, Tensor};

#[derive(Debug, Clone)]
pub struct GamParams<T: Element> {
    pub channels: usize,
    pub reduction: usize,
    pub mlp_w1: Tensor<T>,
    pub mlp_b1: Tensor<T>,
    pub mlp_w2: Tensor<T>,
    pub mlp_b2: Tensor<T>,
    pub conv1_k: Tensor<T>,
    pub conv1_b: Tensor<T>,
    pub conv2_k: Tensor<T>,
    pub conv2_b: Tensor<T>,
}

pub const GAM_CONV_KERNEL: usize = 7;

impl<T: Element> GamParams<T> {
    fn validate_dims(channels: usize, reduction: usize) -> Result<()> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::Config(format!(
                "channel count {channels} must be divisible by reduction {reduction}"
            )));
        }
        Ok(())
    }

    pub fn zeros(channels: usize, reduction: usize) -> Result<Self> {
        Self::validate_dims(channels, reduction)?;
        let c = channels;
        let cr = channels / reduction;
        let k = GAM_CONV_KERNEL;
        Ok(Self {
            channels,
            reduction,
            mlp_w1: Tensor::zeros(&[c, cr]),
            mlp_b1: Tensor::zeros(&[cr]),
            mlp_w2: Tensor::zeros(&[cr, c]),
            mlp_b2: Tensor::zeros(&[c]),
            conv1_k: Tensor::zeros(&[cr, c, k, k]),
            conv1_b: Tensor::zeros(&[cr]),
            conv2_k: Tensor::zeros(&[c, cr, k, k]),
            conv2_b: Tensor::zeros(&[c]),
        })
    }

    pub fn init<R: Rng>(channels: usize, reduction: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(channels, reduction)?;
        let c = channels;
        let cr = channels / reduction;
        let k = GAM_CONV_KERNEL;
        let s_mlp = (6.0 / c as f64).sqrt();
        p.mlp_w1 = Tensor::uniform(&[c, cr], -s_mlp, s_mlp, rng);
        let s_mlp2 = (6.0 / cr as f64).sqrt();
        p.mlp_w2 = Tensor::uniform(&[cr, c], -s_mlp2, s_mlp2, rng);
        let s1 = (6.0 / (c * k * k) as f64).sqrt();
        p.conv1_k = Tensor::uniform(&[cr, c, k, k], -s1, s1, rng);
        let s2 = (6.0 / (cr * k * k) as f64).sqrt();
        p.conv2_k = Tensor::uniform(&[c, cr, k, k], -s2, s2, rng);
        Ok(p)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("mlp_w1", &self.mlp_w1),
            ("mlp_b1", &self.mlp_b1),
            ("mlp_w2", &self.mlp_w2),
            ("mlp_b2", &self.mlp_b2),
            ("conv1_k", &self.conv1_k),
            ("conv1_b", &self.conv1_b),
            ("conv2_k", &self.conv2_k),
            ("conv2_b", &self.conv2_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![
            ("mlp_w1", &mut self.mlp_w1),
            ("mlp_b1", &mut self.mlp_b1),
            ("mlp_w2", &mut self.mlp_w2),
            ("mlp_b2", &mut self.mlp_b2),
            ("conv1_k", &mut self.conv1_k),
            ("conv1_b", &mut self.conv1_b),
            ("conv2_k", &mut self.conv2_k),
            ("conv2_b", &mut self.conv2_b),
        ]
    }

    pub fn register(&self, g: &mut Graph<T>) -> Vec<NodeId> {
        self.tensors().into_iter().map(|(_, t)| g.leaf(t.clone())).collect()
    }
}

const MLP_W1: usize = 0;
const MLP_B1: usize = 1;
const MLP_W2: usize = 2;
const MLP_B2: usize = 3;
const CONV1_K: usize = 4;
const CONV1_B: usize = 5;
const CONV2_K: usize = 6;
const CONV2_B: usize = 7;

/// `x1 = x * sigmoid(channel_mlp(x))` (broadcast over H,W), then
/// `out = x1 * sigmoid(conv7(conv7(x1)))`. Shape-preserving.
pub fn gam<T: Element>(
    g: &mut Graph<T>,
    x: NodeId,
    p: &GamParams<T>,
    ids: &[NodeId],
) -> Result<NodeId> {
    GamParams::<T>::validate_dims(p.channels, p.reduction)?;
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 4 || shape[1] != p.channels {
        return Err(Error::Shape(format!(
            "gam expects [N,{},H,W], got {shape:?}",
            p.channels
        )));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);

    // channel gate
    let pooled = g.spatial_mean(x)?; // [N, C]
    let a = g.matmul(pooled, ids[MLP_W1])?;
    let a = g.add_row_bias(a, ids[MLP_B1])?;
    let a = g.gelu(a);
    let a = g.matmul(a, ids[MLP_W2])?;
    let a = g.add_row_bias(a, ids[MLP_B2])?;
    let gate_c = g.sigmoid(a); // [N, C]
    // broadcast [N,C] -> [N,C,H,W]
    let mut bmap = vec![None; n * c * h * w];
    for (o, slot) in bmap.iter_mut().enumerate() {
        let ci = (o / (h * w)) % c;
        let ni = o / (c * h * w);
        *slot = Some(ni * c + ci);
    }
    let gate_c = g.remap(gate_c, Arc::new(bmap), &[n, c, h, w])?;
    let x1 = g.mul(x, gate_c)?;

    // spatial gate
    let pad = GAM_CONV_KERNEL / 2;
    let s = g.conv2d(x1, ids[CONV1_K], Some(ids[CONV1_B]), 1, pad)?;
    let s = g.conv2d(s, ids[CONV2_K], Some(ids[CONV2_B]), 1, pad)?;
    let gate_s = g.sigmoid(s);
    g.mul(x1, gate_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, FD_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_weights_give_quarter_gain() {
        // both gates are sigmoid(0) = 0.5
        let p = GamParams::<f64>::zeros(4, 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = Tensor::uniform(&[1, 4, 5, 5], -2.0, 2.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x.clone());
        let ids = p.register(&mut g);
        let out = gam(&mut g, xid, &p, &ids).unwrap();
        for (got, want) in g.value(out).data().iter().zip(x.data()) {
            assert!((got - want * 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_indivisible_reduction() {
        assert!(GamParams::<f64>::zeros(6, 4).is_err());
    }

    #[test]
    fn gates_strictly_inside_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let p = GamParams::<f64>::init(8, 4, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 8, 4, 4], -3.0, 3.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x.clone());
        let ids = p.register(&mut g);
        let out = gam(&mut g, xid, &p, &ids).unwrap();
        // |out| < |x| elementwise wherever x is nonzero, since each gate is in (0,1)
        for (got, want) in g.value(out).data().iter().zip(x.data()) {
            if *want != 0.0 {
                assert!(got.abs() < want.abs());
                assert!(got.signum() == want.signum());
            }
        }
        assert_eq!(g.value(out).shape(), x.shape());
    }

    #[test]
    fn gam_gradients_match_fd() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = GamParams::<f64>::init(4, 2, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 4, 4, 4], -1.0, 1.0, &mut rng);
        let mut params = vec![x];
        params.extend(p.tensors().into_iter().map(|(_, t)| t.clone()));
        let report = grad_check(
            |g, ids| {
                let out = gam(g, ids[0], &p, &ids[1..])?;
                Ok(g.sum(out))
            },
            &params,
            FD_EPS,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
