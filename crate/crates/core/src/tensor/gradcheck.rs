//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, NodeId, Precision, Tensor};

/// Default central-difference step.
pub const FD_EPS: f64 = 1e-5;

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so near-zero gradients are compared at the floor scale instead of
/// amplifying finite-difference noise.
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (param index, coordinate) of the worst comparison.
    pub worst: (usize, usize),
    pub coords_checked: usize,
    pub coords_skipped: usize,
}

/// Compare analytic gradients of a scalar-valued graph function against
/// central finite differences, coordinate by coordinate.
///
/// Requires high precision; `f32` finite differences are too noisy to be
/// meaningful at these tolerances.
pub fn grad_check<T, F>(f: F, params: &[Tensor<T>], eps: f64) -> Result<GradCheckReport>
where
    T: Element,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    let no_skip: Vec<Option<&[bool]>> = vec![None; params.len()];
    grad_check_with_skip(f, params, eps, &no_skip)
}

/// Like [`grad_check`] but with an optional per-parameter mask of
/// coordinates to skip (kink neighborhoods of relu/maxpool style ops).
pub fn grad_check_with_skip<T, F>(
    f: F,
    params: &[Tensor<T>],
    eps: f64,
    skip: &[Option<&[bool]>],
) -> Result<GradCheckReport>
where
    T: Element,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    if T::PRECISION != Precision::High {
        return Err(Error::Config(
            "grad_check requires high-precision tensors".into(),
        ));
    }
    if skip.len() != params.len() {
        return Err(Error::Config("skip mask count must match param count".into()));
    }

    let eval = |inputs: &[Tensor<T>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let y = f(&mut g, &ids)?;
        if g.value(y).len() != 1 {
            return Err(Error::Shape("grad_check function must be scalar-valued".into()));
        }
        let v = g.value(y).data()[0].to_f64().unwrap();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("grad_check objective evaluated to {v}")));
        }
        Ok(v)
    };

    // analytic pass
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|t| g.leaf(t.clone())).collect();
    let y = f(&mut g, &ids)?;
    if g.value(y).len() != 1 {
        return Err(Error::Shape("grad_check function must be scalar-valued".into()));
    }
    g.backward(y)?;
    let analytic: Vec<Tensor<T>> = ids.iter().map(|&id| g.grad(id)).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coords_checked: 0,
        coords_skipped: 0,
    };
    let mut work: Vec<Tensor<T>> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ci in 0..param.len() {
            if let Some(mask) = skip[pi] {
                if mask[ci] {
                    report.coords_skipped += 1;
                    continue;
                }
            }
            let orig = param.data()[ci];
            let step = crate::tensor::fe::<T>(eps);
            work[pi].data_mut()[ci] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[ci] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[ci] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[ci].to_f64().unwrap();
            let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ci);
            }
            report.coords_checked += 1;
        }
    }
    Ok(report)
}
