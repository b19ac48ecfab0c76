//! Cross-validation fold aggregation: per-metric means, variances and a
//! two-tailed paired t-test between two models' fold vectors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const N_FOLDS: usize = 5;

/// Two-tailed paired t-test over per-fold differences `b - a`.
///
/// Degenerate pairings (zero variance of the differences) use the
/// convention `p = 1` when the fold vectors are identical and `p = 0`
/// otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Protocol(format!(
            "paired t-test needs two equal-length vectors of >= 2 folds, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 { (0.0, 1.0) } else { (f64::INFINITY, 0.0) });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Protocol(format!("t-distribution setup failed: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p))
}

/// Printed summary values to cross-check the recomputation against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportedSummary {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub folds_a: Vec<f64>,
    pub folds_b: Vec<f64>,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Sample variance (n-1 denominator); the headline figure.
    pub var_sample_a: f64,
    pub var_sample_b: f64,
    /// Population variance (n denominator), emitted alongside.
    pub var_population_a: f64,
    pub var_population_b: f64,
    pub mean_diff: f64,
    pub t_stat: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub metrics: Vec<MetricSummary>,
    /// Discrepancy flags raised against externally reported summaries;
    /// informational, never asserted by the aggregation itself.
    pub notes: Vec<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64], ddof: f64) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - ddof)
}

/// Aggregate paired five-fold metrics for two models. `metrics` maps a
/// metric name to (model A folds, model B folds), paired by fold index.
pub fn aggregate_folds(
    metrics: &[(String, Vec<f64>, Vec<f64>)],
    reported: Option<&[ReportedSummary]>,
) -> Result<FoldReport> {
    let mut out = Vec::with_capacity(metrics.len());
    let mut notes = Vec::new();
    for (name, a, b) in metrics {
        if a.len() != N_FOLDS || b.len() != N_FOLDS {
            return Err(Error::Protocol(format!(
                "metric {name}: expected {N_FOLDS} folds per model, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let (t, p) = paired_t_test(a, b)?;
        out.push(MetricSummary {
            metric: name.clone(),
            folds_a: a.clone(),
            folds_b: b.clone(),
            mean_a: mean(a),
            mean_b: mean(b),
            var_sample_a: variance(a, 1.0),
            var_sample_b: variance(b, 1.0),
            var_population_a: variance(a, 0.0),
            var_population_b: variance(b, 0.0),
            mean_diff: mean(b) - mean(a),
            t_stat: t,
            degrees_of_freedom: N_FOLDS - 1,
            p_value: p,
        });
    }
    if let Some(reported) = reported {
        for r in reported {
            let Some(m) = out.iter().find(|m| m.metric == r.metric) else {
                notes.push(format!("reported summary for unknown metric {:?}", r.metric));
                continue;
            };
            let mut flag = |what: &str, got: f64, said: f64| {
                if (got - said).abs() > 0.05 {
                    notes.push(format!(
                        "{}: recomputed {what} {got:.3} disagrees with reported {said:.3}; \
                         fold rows are treated as ground truth",
                        m.metric
                    ));
                }
            };
            flag("mean (model a)", m.mean_a, r.mean_a);
            flag("mean (model b)", m.mean_b, r.mean_b);
            flag("sample variance (model a)", m.var_sample_a, r.var_a);
            flag("sample variance (model b)", m.var_sample_b, r.var_b);
        }
    }
    Ok(FoldReport { metrics: out, notes })
}
