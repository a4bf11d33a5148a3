//! Decentralized problem instances `f(x) = (1/n) Σᵢ fᵢ(x)`, where `fᵢ` is
//! the average loss over worker `i`'s shard.

mod generate;
mod variance;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixing::symmetric_eigen;

pub use generate::{
    gen_label_partition, gen_least_squares, LabelPartitionParams, LeastSquaresParams, ProblemKind,
    ProblemParams, ProblemSpec,
};
pub use variance::{estimate_variances, zeta0, VarianceEstimates};

/// Ridge coefficient added to every logistic-regression shard loss.
pub const LOGISTIC_RIDGE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    LeastSquares,
    LogisticRegression,
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    /// `fᵢ(x) = (1/2mᵢ) ‖Aᵢx − bᵢ‖²`
    LeastSquares,
    /// One-vs-all logistic loss summed over classes plus `ridge·‖x‖²`. The
    /// model stacks one weight block of length `features` per class.
    Logistic {
        classes: usize,
        features: usize,
        ridge: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(DVector<f64>),
    Labels(Vec<usize>),
}

/// One worker's data: sample `j` is column `j` of `samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    samples: DMatrix<f64>,
    targets: Targets,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    /// `λ_max(AᵀA)/m`
    fn gram_spectral_norm(&self) -> Result<f64> {
        let gram = &self.samples * self.samples.transpose() / self.len() as f64;
        Ok(symmetric_eigen(&gram)?.values[0].max(0.0))
    }
}

/// A stochastic gradient together with the samples it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub worker: usize,
    pub value: DVector<f64>,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    spec: Option<ProblemSpec>,
    objective: Objective,
    shards: Vec<Shard>,
    smoothness: f64,
}

impl ProblemInstance {
    /// Least squares from explicit shards `(Aᵢ, bᵢ)`, `Aᵢ` being `mᵢ × dim`.
    pub fn least_squares_from_shards(shards: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let shards = shards
            .into_iter()
            .map(|(a, b)| {
                if a.nrows() != b.len() {
                    return Err(Error::Dimension(format!(
                        "{} rows of features but {} targets",
                        a.nrows(),
                        b.len()
                    )));
                }
                Ok(Shard {
                    samples: a.transpose(),
                    targets: Targets::Values(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(None, Objective::LeastSquares, shards)
    }

    /// One-vs-all logistic regression from explicit shards. Labels must be
    /// below `classes`.
    pub fn logistic_from_shards(classes: usize, shards: Vec<(DMatrix<f64>, Vec<usize>)>) -> Result<Self> {
        let features = shards.first().map(|(a, _)| a.ncols()).unwrap_or(0);
        let shards = shards
            .into_iter()
            .map(|(a, y)| {
                if a.nrows() != y.len() {
                    return Err(Error::Dimension(format!(
                        "{} rows of features but {} labels",
                        a.nrows(),
                        y.len()
                    )));
                }
                if let Some(bad) = y.iter().find(|&&c| c >= classes) {
                    return Err(Error::InvalidArgument(format!("label {bad} ≥ {classes} classes")));
                }
                Ok(Shard {
                    samples: a.transpose(),
                    targets: Targets::Labels(y),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(
            None,
            Objective::Logistic {
                classes,
                features,
                ridge: LOGISTIC_RIDGE,
            },
            shards,
        )
    }

    fn assemble(spec: Option<ProblemSpec>, objective: Objective, shards: Vec<Shard>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::InvalidArgument("a problem needs at least one worker".into()));
        }
        let features = shards[0].samples.nrows();
        if features == 0 {
            return Err(Error::InvalidArgument("samples have no features".into()));
        }
        for (i, s) in shards.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidArgument(format!("shard {i} is empty")));
            }
            if s.samples.nrows() != features {
                return Err(Error::Dimension(format!(
                    "shard {i} has {} features, expected {features}",
                    s.samples.nrows()
                )));
            }
        }
        let mut gram_max = 0.0f64;
        for s in &shards {
            gram_max = gram_max.max(s.gram_spectral_norm()?);
        }
        let smoothness = match objective {
            Objective::LeastSquares => gram_max,
            Objective::Logistic { ridge, .. } => 0.25 * gram_max + 2.0 * ridge,
        };
        if !(smoothness > 0.0) {
            return Err(Error::InvalidArgument(
                "all-zero features give no positive smoothness constant".into(),
            ));
        }
        Ok(Self {
            spec,
            objective,
            shards,
            smoothness,
        })
    }

    pub fn spec(&self) -> Option<&ProblemSpec> {
        self.spec.as_ref()
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self.objective {
            Objective::LeastSquares => ObjectiveKind::LeastSquares,
            Objective::Logistic { .. } => ObjectiveKind::LogisticRegression,
        }
    }

    pub fn n(&self) -> usize {
        self.shards.len()
    }

    /// Model dimension (classes × features for logistic regression).
    pub fn dim(&self) -> usize {
        let p = self.shards[0].samples.nrows();
        match self.objective {
            Objective::LeastSquares => p,
            Objective::Logistic { classes, .. } => classes * p,
        }
    }

    /// Upper bound on every local Hessian's spectral norm.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn shard(&self, worker: usize) -> &Shard {
        &self.shards[worker]
    }

    pub fn shard_len(&self, worker: usize) -> usize {
        self.shards[worker].len()
    }

    fn check(&self, worker: usize, x: &DVector<f64>) -> Result<()> {
        if worker >= self.n() {
            return Err(Error::InvalidArgument(format!(
                "worker {worker} out of range for {} workers",
                self.n()
            )));
        }
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "model has length {}, problem dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn sample_loss(&self, shard: &Shard, j: usize, x: &DVector<f64>) -> f64 {
        let a = shard.samples.column(j);
        match (&self.objective, &shard.targets) {
            (Objective::LeastSquares, Targets::Values(b)) => {
                let r = a.dot(x) - b[j];
                0.5 * r * r
            }
            (Objective::Logistic { classes, features, .. }, Targets::Labels(y)) => (0..*classes)
                .map(|c| {
                    let z = a.dot(&x.rows(c * features, *features));
                    let s = if y[j] == c { 1.0 } else { -1.0 };
                    softplus(-s * z)
                })
                .sum(),
            _ => unreachable!("targets always match the objective"),
        }
    }

    /// `out += weight · ∇ℓ(x; sample j)`, without the ridge part.
    fn add_sample_gradient(&self, shard: &Shard, j: usize, x: &DVector<f64>, weight: f64, out: &mut DVector<f64>) {
        let a = shard.samples.column(j);
        match (&self.objective, &shard.targets) {
            (Objective::LeastSquares, Targets::Values(b)) => {
                let r = a.dot(x) - b[j];
                out.axpy(weight * r, &a, 1.0);
            }
            (Objective::Logistic { classes, features, .. }, Targets::Labels(y)) => {
                for c in 0..*classes {
                    let z = a.dot(&x.rows(c * features, *features));
                    let s = if y[j] == c { 1.0 } else { -1.0 };
                    let coef = -s * sigmoid(-s * z);
                    out.rows_mut(c * features, *features).axpy(weight * coef, &a, 1.0);
                }
            }
            _ => unreachable!("targets always match the objective"),
        }
    }

    fn ridge(&self) -> f64 {
        match self.objective {
            Objective::LeastSquares => 0.0,
            Objective::Logistic { ridge, .. } => ridge,
        }
    }

    /// `fᵢ(x)`
    pub fn local_loss(&self, worker: usize, x: &DVector<f64>) -> Result<f64> {
        self.check(worker, x)?;
        let shard = &self.shards[worker];
        let data: f64 = (0..shard.len()).map(|j| self.sample_loss(shard, j, x)).sum::<f64>() / shard.len() as f64;
        Ok(data + self.ridge() * x.norm_squared())
    }

    /// Average loss over the given samples of one shard, ridge included.
    pub fn sample_gradient(&self, worker: usize, x: &DVector<f64>, indices: &[usize]) -> Result<DVector<f64>> {
        self.check(worker, x)?;
        let shard = &self.shards[worker];
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty minibatch".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= shard.len()) {
            return Err(Error::InvalidArgument(format!(
                "sample {bad} out of range for shard of {}",
                shard.len()
            )));
        }
        let mut g = DVector::zeros(x.len());
        for &j in indices {
            self.add_sample_gradient(shard, j, x, 1.0, &mut g);
        }
        g /= indices.len() as f64;
        let ridge = self.ridge();
        if ridge != 0.0 {
            g.axpy(2.0 * ridge, x, 1.0);
        }
        Ok(g)
    }

    /// Exact `∇fᵢ(x)`.
    pub fn full_local_gradient(&self, worker: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(worker, x)?;
        let all: Vec<usize> = (0..self.shards[worker].len()).collect();
        self.sample_gradient(worker, x, &all)
    }

    /// Minibatch gradient with `batch_size` indices drawn uniformly with
    /// replacement from the worker's shard.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        worker: usize,
        x: &DVector<f64>,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<GradientSample> {
        self.check(worker, x)?;
        let m = self.shards[worker].len();
        if batch_size == 0 || batch_size > m {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} outside 1..={m}"
            )));
        }
        let indices: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..m)).collect();
        let value = self.sample_gradient(worker, x, &indices)?;
        Ok(GradientSample { worker, value, indices })
    }

    /// Minibatch of distinct samples, returned in increasing index order.
    pub fn stochastic_gradient_without_replacement<R: Rng + ?Sized>(
        &self,
        worker: usize,
        x: &DVector<f64>,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<GradientSample> {
        self.check(worker, x)?;
        let m = self.shards[worker].len();
        if batch_size == 0 || batch_size > m {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} outside 1..={m}"
            )));
        }
        let mut indices = rand::seq::index::sample(rng, m, batch_size).into_vec();
        indices.sort_unstable();
        let value = self.sample_gradient(worker, x, &indices)?;
        Ok(GradientSample { worker, value, indices })
    }

    /// `f(x) = (1/n) Σᵢ fᵢ(x)`
    pub fn loss(&self, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.n() {
            total += self.local_loss(i, x)?;
        }
        Ok(total / self.n() as f64)
    }

    /// `∇f(x) = (1/n) Σᵢ ∇fᵢ(x)`
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.dim());
        for i in 0..self.n() {
            g += self.full_local_gradient(i, x)?;
        }
        Ok(g / self.n() as f64)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}
