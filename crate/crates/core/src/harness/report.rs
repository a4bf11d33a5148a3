//! Side-by-side comparison of trajectories on one problem.

use std::fmt::Write as _;

use serde::Serialize;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::optimizers::Algorithm;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonEntry {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub final_t: usize,
    pub loss: f64,
    pub grad_norm_sq_mean: f64,
    pub grad_norm_sq_avg: f64,
    pub consensus_err: f64,
    /// Final values divided by the baseline's (the first trajectory).
    /// `0/0` counts as 1; JSON shows an infinite ratio as `null`.
    pub loss_ratio: f64,
    pub grad_norm_sq_mean_ratio: f64,
    pub grad_norm_sq_avg_ratio: f64,
    pub consensus_err_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub baseline: Algorithm,
    pub entries: Vec<ComparisonEntry>,
    /// Every trajectory warning, prefixed with its algorithm.
    pub warnings: Vec<String>,
}

fn ratio(x: f64, base: f64) -> f64 {
    if x == base {
        1.0
    } else {
        x / base
    }
}

/// Needs at least two trajectories generated from the same problem spec.
pub fn compare_report(trajectories: &[Trajectory]) -> Result<Comparison> {
    if trajectories.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two trajectories to compare, got {}",
            trajectories.len()
        )));
    }
    let first = &trajectories[0];
    if let Some(other) = trajectories.iter().find(|t| t.problem != first.problem) {
        return Err(Error::InvalidArgument(format!(
            "trajectories come from different problems: {} vs {}",
            first.problem.to_json(),
            other.problem.to_json()
        )));
    }
    let last = |t: &Trajectory| {
        t.records
            .last()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("{} trajectory has no records", t.algorithm)))
    };
    let base = last(first)?;
    let mut entries = Vec::with_capacity(trajectories.len());
    let mut warnings = Vec::new();
    for t in trajectories {
        let r = last(t)?;
        entries.push(ComparisonEntry {
            algorithm: t.algorithm,
            gamma: t.gamma,
            final_t: r.t,
            loss: r.loss_mean_model,
            grad_norm_sq_mean: r.grad_norm_sq_mean_model,
            grad_norm_sq_avg: r.grad_norm_sq_avg,
            consensus_err: r.consensus_err,
            loss_ratio: ratio(r.loss_mean_model, base.loss_mean_model),
            grad_norm_sq_mean_ratio: ratio(r.grad_norm_sq_mean_model, base.grad_norm_sq_mean_model),
            grad_norm_sq_avg_ratio: ratio(r.grad_norm_sq_avg, base.grad_norm_sq_avg),
            consensus_err_ratio: ratio(r.consensus_err, base.consensus_err),
        });
        for w in &t.warnings {
            let line = format!("{}: {w}", t.algorithm);
            if !warnings.contains(&line) {
                warnings.push(line);
            }
        }
    }
    Ok(Comparison {
        baseline: first.algorithm,
        entries,
        warnings,
    })
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    /// Fixed-width table of final metrics and ratios to the baseline.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<6} {:>6} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10}",
            "algo", "iter", "loss", "grad_mean", "grad_avg", "consensus", "loss_x", "gmean_x", "cons_x"
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<6} {:>6} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>10.4} {:>10.4} {:>10.4}",
                e.algorithm.name(),
                e.final_t,
                e.loss,
                e.grad_norm_sq_mean,
                e.grad_norm_sq_avg,
                e.consensus_err,
                e.loss_ratio,
                e.grad_norm_sq_mean_ratio,
                e.consensus_err_ratio
            );
        }
        let _ = writeln!(s, "ratios relative to {}", self.baseline.name());
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
