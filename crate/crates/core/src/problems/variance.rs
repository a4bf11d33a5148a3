use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ProblemInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimates {
    /// Largest per-worker, per-probe mean of `‖∇Fᵢ(x; ξ) − ∇fᵢ(x)‖²` over
    /// singleton samples `ξ`.
    pub sigma_sq: f64,
    /// `(1/n) Σᵢ ‖∇fᵢ(0) − ∇f(0)‖²`, exact.
    pub zeta0: f64,
}

/// Heterogeneity of the local gradients at the origin.
pub fn zeta0(problem: &ProblemInstance) -> Result<f64> {
    let origin = DVector::zeros(problem.dim());
    let locals = (0..problem.n())
        .map(|i| problem.full_local_gradient(i, &origin))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = DVector::zeros(problem.dim());
    for g in &locals {
        mean += g;
    }
    mean /= problem.n() as f64;
    Ok(locals.iter().map(|g| (g - &mean).norm_squared()).sum::<f64>() / problem.n() as f64)
}

pub fn estimate_variances<R: Rng + ?Sized>(
    problem: &ProblemInstance,
    probe_points: &[DVector<f64>],
    samples: usize,
    rng: &mut R,
) -> Result<VarianceEstimates> {
    if probe_points.is_empty() {
        return Err(Error::InvalidArgument("need at least one probe point".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample per probe".into()));
    }
    let mut sigma_sq = 0.0f64;
    for x in probe_points {
        for i in 0..problem.n() {
            let full = problem.full_local_gradient(i, x)?;
            let mut acc = 0.0;
            for _ in 0..samples {
                let g = problem.stochastic_gradient(i, x, 1, rng)?;
                acc += (g.value - &full).norm_squared();
            }
            sigma_sq = sigma_sq.max(acc / samples as f64);
        }
    }
    Ok(VarianceEstimates {
        sigma_sq,
        zeta0: zeta0(problem)?,
    })
}
