//! Seeded synthetic instances. A [`ProblemSpec`] is the serialized form of
//! an instance: it records the generator inputs, not the data.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Objective, ProblemInstance, Shard, Targets, LOGISTIC_RIDGE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    LeastSquares,
    LabelPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresParams {
    pub samples_per_worker: usize,
    /// Length of the per-worker shift of the target model; drives ζ.
    pub heterogeneity: f64,
    /// Scale of the per-sample target noise; drives σ and leaves ζ alone.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelPartitionParams {
    pub classes: usize,
    pub samples_per_class: usize,
    pub shuffled: bool,
    /// Scale of the class centers.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Standard deviation of samples around their class center.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_separation() -> f64 {
    1.0
}

fn default_spread() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ProblemParams {
    LeastSquares(LeastSquaresParams),
    LabelPartition(LabelPartitionParams),
}

/// `{"kind", "n", "dim", "seed", "params"}`. For label partitions `dim` is
/// the feature dimension; the model has `classes × dim` entries.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ProblemSpec {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    pub params: ProblemParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: ProblemKind,
    n: usize,
    dim: usize,
    seed: u64,
    params: serde_json::Value,
}

impl TryFrom<RawSpec> for ProblemSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let params = match raw.kind {
            ProblemKind::LeastSquares => ProblemParams::LeastSquares(serde_json::from_value(raw.params)?),
            ProblemKind::LabelPartition => ProblemParams::LabelPartition(serde_json::from_value(raw.params)?),
        };
        let spec = ProblemSpec {
            n: raw.n,
            dim: raw.dim,
            seed: raw.seed,
            params,
        };
        spec.check()?;
        Ok(spec)
    }
}

// Serialized through a typed view so `params` keeps field order.
#[derive(Serialize)]
struct SpecView<'a> {
    kind: ProblemKind,
    n: usize,
    dim: usize,
    seed: u64,
    params: &'a ProblemParams,
}

impl Serialize for ProblemSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SpecView {
            kind: self.kind(),
            n: self.n,
            dim: self.dim,
            seed: self.seed,
            params: &self.params,
        }
        .serialize(serializer)
    }
}

impl ProblemSpec {
    pub fn least_squares(n: usize, dim: usize, seed: u64, params: LeastSquaresParams) -> Self {
        Self {
            n,
            dim,
            seed,
            params: ProblemParams::LeastSquares(params),
        }
    }

    pub fn label_partition(n: usize, dim: usize, seed: u64, params: LabelPartitionParams) -> Self {
        Self {
            n,
            dim,
            seed,
            params: ProblemParams::LabelPartition(params),
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self.params {
            ProblemParams::LeastSquares(_) => ProblemKind::LeastSquares,
            ProblemParams::LabelPartition(_) => ProblemKind::LabelPartition,
        }
    }

    /// Checks generator preconditions without generating anything.
    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        match &self.params {
            ProblemParams::LeastSquares(p) => {
                if p.samples_per_worker == 0 {
                    return Err(Error::InvalidArgument("samples_per_worker must be at least 1".into()));
                }
                nonnegative("heterogeneity", p.heterogeneity)?;
                nonnegative("noise", p.noise)?;
            }
            ProblemParams::LabelPartition(p) => {
                if p.classes == 0 || p.samples_per_class == 0 {
                    return Err(Error::InvalidArgument(
                        "classes and samples_per_class must be at least 1".into(),
                    ));
                }
                nonnegative("separation", p.separation)?;
                nonnegative("spread", p.spread)?;
                if !p.shuffled && p.classes % self.n != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "unshuffled partition needs classes ({}) divisible by workers ({})",
                        p.classes, self.n
                    )));
                }
                let total = p.classes.checked_mul(p.samples_per_class);
                if total.is_none_or(|t| t < self.n) {
                    return Err(Error::InvalidArgument(
                        "fewer samples than workers; some shard would be empty".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<ProblemInstance> {
        self.check()?;
        match &self.params {
            ProblemParams::LeastSquares(p) => build_least_squares(self, p),
            ProblemParams::LabelPartition(p) => build_label_partition(self, p),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and ≥ 0, got {x}")))
    }
}

fn gaussian_vector(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

pub fn gen_least_squares(
    n: usize,
    dim: usize,
    samples_per_worker: usize,
    heterogeneity: f64,
    noise: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    ProblemSpec::least_squares(
        n,
        dim,
        seed,
        LeastSquaresParams {
            samples_per_worker,
            heterogeneity,
            noise,
        },
    )
    .generate()
}

pub fn gen_label_partition(
    n: usize,
    dim: usize,
    classes: usize,
    samples_per_class: usize,
    shuffled: bool,
    seed: u64,
) -> Result<ProblemInstance> {
    ProblemSpec::label_partition(
        n,
        dim,
        seed,
        LabelPartitionParams {
            classes,
            samples_per_class,
            shuffled,
            separation: default_separation(),
            spread: default_spread(),
        },
    )
    .generate()
}

/// Worker `i` gets its own standard-normal design `Aᵢ` (so local Hessians
/// differ) and targets `bᵢ = Aᵢ(x★ + h·uᵢ) + noise·εᵢ` with shared ground
/// truth `x★ = 0` and a unit direction `uᵢ`.
///
/// `εᵢ` is a Gaussian draw with its component in the column space of `Aᵢ`
/// removed. The noise then changes individual sample gradients (σ) but not
/// `∇fᵢ`, so `∇fᵢ(0) = −h·Hᵢuᵢ` and ζ₀ is exactly `h²` times a constant of
/// the seed. When `samples_per_worker ≤ dim` the column space is everything
/// and the noise vanishes.
fn build_least_squares(spec: &ProblemSpec, p: &LeastSquaresParams) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (m, d) = (p.samples_per_worker, spec.dim);
    let shards = (0..spec.n)
        .map(|_| {
            let a = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng));
            let mut u = gaussian_vector(d, &mut rng);
            let norm = u.norm();
            if norm > 0.0 {
                u /= norm;
            }
            let eps = residual_off_columns(&a, gaussian_vector(m, &mut rng));
            let targets = &a * (u * p.heterogeneity) + eps * p.noise;
            Shard {
                samples: a.transpose(),
                targets: Targets::Values(targets),
            }
        })
        .collect();
    ProblemInstance::assemble(Some(spec.clone()), Objective::LeastSquares, shards)
}

/// `y` minus its orthogonal projection onto the column space of `a`.
fn residual_off_columns(a: &DMatrix<f64>, y: DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let mut r = y;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let col = u.column(k);
            let c = col.dot(&r);
            r.axpy(-c, &col, 1.0);
        }
    }
    r
}

/// Gaussian blobs, one center per class, pooled class-major and rescaled so
/// the average squared feature is one. Unshuffled: worker `w` owns the
/// contiguous class block `[w·k, (w+1)·k)`. Shuffled: the pool is permuted
/// and dealt round-robin, each shard keeping pool order.
fn build_label_partition(spec: &ProblemSpec, p: &LabelPartitionParams) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let centers: Vec<DVector<f64>> = (0..p.classes)
        .map(|_| gaussian_vector(d, &mut rng) * p.separation)
        .collect();
    let total = p.classes * p.samples_per_class;
    let mut pool = DMatrix::zeros(d, total);
    let mut labels = Vec::with_capacity(total);
    for (c, center) in centers.iter().enumerate() {
        for s in 0..p.samples_per_class {
            let col = center + gaussian_vector(d, &mut rng) * p.spread;
            pool.set_column(c * p.samples_per_class + s, &col);
            labels.push(c);
        }
    }
    let mean_sq = pool.norm_squared() / (d * total) as f64;
    if mean_sq > 0.0 {
        pool /= mean_sq.sqrt();
    }

    let assignment: Vec<Vec<usize>> = if p.shuffled {
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng);
        let mut parts = vec![Vec::new(); spec.n];
        for (pos, idx) in order.into_iter().enumerate() {
            parts[pos % spec.n].push(idx);
        }
        for part in &mut parts {
            part.sort_unstable();
        }
        parts
    } else {
        let per_worker = p.classes / spec.n * p.samples_per_class;
        (0..spec.n)
            .map(|w| (w * per_worker..(w + 1) * per_worker).collect())
            .collect()
    };

    let shards = assignment
        .into_iter()
        .map(|idx| Shard {
            samples: pool.select_columns(&idx),
            targets: Targets::Labels(idx.iter().map(|&j| labels[j]).collect()),
        })
        .collect();
    ProblemInstance::assemble(
        Some(spec.clone()),
        Objective::Logistic {
            classes: p.classes,
            features: d,
            ridge: LOGISTIC_RIDGE,
        },
        shards,
    )
}
