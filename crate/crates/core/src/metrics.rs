//! Exact convergence quantities on optimizer states.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{Algorithm, OptimizerState};
use crate::problems::{self, ProblemInstance};

/// One row of a trajectory. All fields are computed with full-batch
/// gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub t: usize,
    /// `f(X̄_t)`
    pub loss_mean_model: f64,
    /// `‖∇f(X̄_t)‖²`
    pub grad_norm_sq_mean_model: f64,
    /// `‖(1/n) Σᵢ ∇fᵢ(x_t⁽ⁱ⁾)‖²`
    pub grad_norm_sq_avg: f64,
    /// `Σᵢ ‖X̄_t − x_t⁽ⁱ⁾‖²`
    pub consensus_err: f64,
    pub gamma: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
}

pub fn evaluate(problem: &ProblemInstance, state: &OptimizerState, gamma: f64, seed: u64) -> Result<MetricRecord> {
    if state.dim() != problem.dim() || state.n() != problem.n() {
        return Err(Error::Dimension(format!(
            "state is {}x{}, problem is {}x{}",
            state.dim(),
            state.n(),
            problem.dim(),
            problem.n()
        )));
    }
    let mean = state.mean();
    let mut grad_mean = DVector::zeros(problem.dim());
    let mut grad_avg = DVector::zeros(problem.dim());
    let mut loss = 0.0;
    let mut consensus_err = 0.0;
    for i in 0..problem.n() {
        let xi = state.worker(i);
        loss += problem.local_loss(i, &mean)?;
        grad_mean += problem.full_local_gradient(i, &mean)?;
        grad_avg += problem.full_local_gradient(i, &xi)?;
        consensus_err += (&mean - &xi).norm_squared();
    }
    let n = problem.n() as f64;
    Ok(MetricRecord {
        t: state.t(),
        loss_mean_model: loss / n,
        grad_norm_sq_mean_model: (grad_mean / n).norm_squared(),
        grad_norm_sq_avg: (grad_avg / n).norm_squared(),
        consensus_err,
        gamma,
        algorithm: state.algorithm(),
        seed,
    })
}

/// `ζ₀ = (1/n) Σᵢ ‖∇fᵢ(0) − ∇f(0)‖²`
pub fn zeta0(problem: &ProblemInstance) -> Result<f64> {
    problems::zeta0(problem)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricMeans {
    pub loss_mean_model: f64,
    pub grad_norm_sq_mean_model: f64,
    pub grad_norm_sq_avg: f64,
    pub consensus_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub records: usize,
    pub last: MetricRecord,
    /// Means over all records.
    pub running_mean: MetricMeans,
    pub min_grad_norm_sq_mean_model: f64,
}

pub fn summarize(records: &[MetricRecord]) -> Result<Summary> {
    let last = records
        .last()
        .ok_or_else(|| Error::InvalidArgument("cannot summarize an empty trajectory".into()))?;
    let k = records.len() as f64;
    let mean_of = |f: fn(&MetricRecord) -> f64| records.iter().map(f).sum::<f64>() / k;
    Ok(Summary {
        records: records.len(),
        last: last.clone(),
        running_mean: MetricMeans {
            loss_mean_model: mean_of(|r| r.loss_mean_model),
            grad_norm_sq_mean_model: mean_of(|r| r.grad_norm_sq_mean_model),
            grad_norm_sq_avg: mean_of(|r| r.grad_norm_sq_avg),
            consensus_err: mean_of(|r| r.consensus_err),
        },
        min_grad_norm_sq_mean_model: records
            .iter()
            .map(|r| r.grad_norm_sq_mean_model)
            .fold(f64::INFINITY, f64::min),
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two (x, y) pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}
