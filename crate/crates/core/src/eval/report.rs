//! Report serialization: JSON with canonical key order, CSV, and PR-curve
//! CSV export for plotting.

use crate::error::Result;
use crate::eval::{EvalReport, PrCurve};

/// Pretty JSON; struct field order plus BTreeMap keys make this canonical.
pub fn report_json(report: &EvalReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("p,{}\n", report.p));
    out.push_str(&format!("r,{}\n", report.r));
    for (thr, ap) in &report.ap_per_threshold {
        out.push_str(&format!("ap@{thr},{ap}\n"));
    }
    out.push_str(&format!("map50,{}\n", report.map50));
    out.push_str(&format!("map5095,{}\n", report.map5095));
    out
}

pub fn pr_curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("confidence,recall,precision\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.confidence, p.recall, p.precision));
    }
    out
}
