//! Fast-normalized weighted fusion of same-shape feature maps:
//! `out = sum_i w_i * x_i` with `w_i = relu(l_i) / (sum_j relu(l_j) + eps)`.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, NodeId, Tensor};

/// Default normalization epsilon.
pub const FUSION_EPS: f64 = 1e-4;

/// One learnable scalar per fused input.
#[derive(Debug, Clone)]
pub struct FusionWeights<T: Element> {
    pub lambdas: Tensor<T>,
    pub eps: f64,
}

impl<T: Element> FusionWeights<T> {
    pub fn new(n_inputs: usize, eps: f64) -> Result<Self> {
        if n_inputs < 2 {
            return Err(Error::Config(format!(
                "fusion needs at least 2 inputs, got {n_inputs}"
            )));
        }
        if eps <= 0.0 {
            return Err(Error::Config("fusion eps must be positive".into()));
        }
        Ok(Self {
            lambdas: Tensor::full(&[n_inputs], T::one()),
            eps,
        })
    }

    pub fn init<R: Rng>(n_inputs: usize, eps: f64, rng: &mut R) -> Result<Self> {
        let mut fw = Self::new(n_inputs, eps)?;
        // start near uniform, away from the relu kink
        fw.lambdas = Tensor::uniform(&[n_inputs], 0.5, 1.5, rng);
        Ok(fw)
    }

    pub fn n_inputs(&self) -> usize {
        self.lambdas.len()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("lambdas", &self.lambdas)]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("lambdas", &mut self.lambdas)]
    }

    pub fn register(&self, g: &mut Graph<T>) -> Vec<NodeId> {
        vec![g.leaf(self.lambdas.clone())]
    }

    /// Normalized weights for reporting: `relu(l_i) / (sum relu(l) + eps)`.
    pub fn normalized(&self) -> Vec<f64> {
        let rl: Vec<f64> = self
            .lambdas
            .data()
            .iter()
            .map(|v| v.to_f64().unwrap().max(0.0))
            .collect();
        let denom: f64 = rl.iter().sum::<f64>() + self.eps;
        rl.into_iter().map(|v| v / denom).collect()
    }
}

/// Fuse `inputs` (identical shapes) with relu-clamped normalized weights.
/// Returns the fused node and the normalized weights actually applied.
pub fn bifpn_fuse<T: Element>(
    g: &mut Graph<T>,
    inputs: &[NodeId],
    fw: &FusionWeights<T>,
    lambda_id: NodeId,
) -> Result<(NodeId, Vec<f64>)> {
    if inputs.is_empty() {
        return Err(Error::Config("fusion of an empty input list".into()));
    }
    if inputs.len() < 2 {
        return Err(Error::Config(format!(
            "fusion needs at least 2 inputs, got {}",
            inputs.len()
        )));
    }
    if inputs.len() != fw.n_inputs() {
        return Err(Error::Config(format!(
            "fusion weight count {} does not match input count {}",
            fw.n_inputs(),
            inputs.len()
        )));
    }
    let shape = g.value(inputs[0]).shape().to_vec();
    for &id in &inputs[1..] {
        if g.value(id).shape() != shape {
            return Err(Error::Shape(format!(
                "fusion inputs must share a shape: {:?} vs {:?}",
                g.value(id).shape(),
                shape
            )));
        }
    }

    let rl = g.relu(lambda_id);
    let total = g.sum(rl);
    let total = g.add_scalar(total, fw.eps)?;
    let inv = g.recip(total);
    let mut fused = None;
    let mut weights = Vec::with_capacity(inputs.len());
    for (i, &x) in inputs.iter().enumerate() {
        let li = g.remap(rl, Arc::new(vec![Some(i)]), &[1])?;
        let wi = g.mul(li, inv)?;
        weights.push(g.value(wi).data()[0].to_f64().unwrap());
        let term = g.scale_by(x, wi)?;
        fused = Some(match fused {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok((fused.unwrap(), weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, FD_EPS};
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn fuse_values(lambdas: &[f64], inputs: &[Tensor<f64>], eps: f64) -> (Tensor<f64>, Vec<f64>) {
        let mut fw = FusionWeights::<f64>::new(inputs.len(), eps).unwrap();
        fw.lambdas = Tensor::from_vec(lambdas.to_vec());
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let lid = fw.register(&mut g)[0];
        let (out, w) = bifpn_fuse(&mut g, &ids, &fw, lid).unwrap();
        (g.value(out).clone(), w)
    }

    #[test]
    fn equal_lambdas_average_within_eps_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = Tensor::<f64>::uniform(&[2, 3], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform(&[2, 3], -1.0, 1.0, &mut rng);
        let eps = FUSION_EPS;
        let (out, w) = fuse_values(&[1.0, 1.0], &[a.clone(), b.clone()], eps);
        for ((o, &x), &y) in out.data().iter().zip(a.data()).zip(b.data()) {
            let avg = (x + y) / 2.0;
            assert!((o - avg).abs() <= avg.abs() * eps + eps);
        }
        assert!((w[0] - w[1]).abs() < 1e-15);
    }

    #[test]
    fn negative_lambda_is_clamped_out() {
        let a = Tensor::<f64>::full(&[2], 1.0);
        let b = Tensor::<f64>::full(&[2], 10.0);
        let eps = FUSION_EPS;
        let (out, w) = fuse_values(&[-5.0, 3.0], &[a, b], eps);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 3.0 / (3.0 + eps)).abs() < 1e-15);
        for &v in out.data() {
            assert!((v - 10.0 * 3.0 / (3.0 + eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_below_one_approaching_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..200 {
            let lambdas: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..50.0)).collect();
            let xs: Vec<Tensor<f64>> = (0..3).map(|_| Tensor::full(&[1], 0.0)).collect();
            let (_, w) = fuse_values(&lambdas, &xs, FUSION_EPS);
            let total: f64 = w.iter().sum();
            let relu_sum: f64 = lambdas.iter().map(|v| v.max(0.0)).sum();
            assert!((total - relu_sum / (relu_sum + FUSION_EPS)).abs() < 1e-12);
            assert!((0.0..1.0).contains(&total));
            if relu_sum > 1000.0 * FUSION_EPS {
                assert!(total > 0.999);
            }
        }
    }

    #[test]
    fn rejects_degenerate_input_lists() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[2]));
        let fw = FusionWeights::<f64>::new(2, FUSION_EPS).unwrap();
        let lid = fw.register(&mut g)[0];
        assert!(bifpn_fuse(&mut g, &[], &fw, lid).is_err());
        assert!(bifpn_fuse(&mut g, &[x], &fw, lid).is_err());
        assert!(FusionWeights::<f64>::new(1, FUSION_EPS).is_err());
        assert!(FusionWeights::<f64>::new(2, 0.0).is_err());
    }

    #[test]
    fn fusion_gradients_match_fd_away_from_relu_kink() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let fw = FusionWeights::<f64>::init(3, FUSION_EPS, &mut rng).unwrap();
        let xs: Vec<Tensor<f64>> = (0..3)
            .map(|_| Tensor::uniform(&[2, 2], -1.0, 1.0, &mut rng))
            .collect();
        let mut params = xs.clone();
        params.push(fw.lambdas.clone());
        let report = grad_check(
            |g, ids| {
                let (out, _) = bifpn_fuse(g, &ids[..3], &fw, ids[3])?;
                Ok(g.sum(out))
            },
            &params,
            FD_EPS,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
