//! Config-driven experiments: build the network and problem, run one or
//! all algorithms on shared sample streams, and emit CSV.

mod config;
mod csv;
mod presets;
mod report;

use std::path::Path;

use serde::Serialize;

pub use config::{load_config, AlgorithmChoice, ExperimentConfig, Gamma, ProblemConfig, TopologyConfig};
pub use csv::{csv_string, parse_csv, write_csv, write_csv_file, CSV_HEADER};
pub use presets::{preset, PRESET_NAMES};
pub use report::{compare_report, Comparison, ComparisonEntry};

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;
use crate::mixing::{recommended_stepsize, theory_constants, MixingMatrix, SpectralConstants, TheoryConstants, Topology};
use crate::optimizers::{self, Algorithm, BatchMode, RunSettings};
use crate::problems::{estimate_variances, ProblemInstance, ProblemSpec, VarianceEstimates};
use crate::rng::SampleStreams;

/// Singleton draws per worker used to estimate σ² at the origin.
pub const VARIANCE_SAMPLES: usize = 256;

// Auxiliary stream tag for the σ² estimate; disjoint from all sample streams.
const VARIANCE_STREAM: u64 = 0x5167_6d61;

/// One algorithm's run under a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub config: ExperimentConfig,
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    /// The step size actually used (resolved when the config says `"auto"`).
    pub gamma: f64,
    pub records: Vec<MetricRecord>,
    pub variances: VarianceEstimates,
    /// `None` when `W` fails validation or `C₃ ≤ 0` at this γ.
    pub constants: Option<TheoryConstants>,
    pub warnings: Vec<String>,
}

/// Everything derived from a config before the first optimizer step.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem_spec: ProblemSpec,
    pub topology: Topology,
    pub mixing: MixingMatrix,
    pub problem: ProblemInstance,
    pub batch: BatchMode,
    /// σ² of the per-round gradient (singleton σ² over the batch size, 0
    /// for full batches) and ζ₀.
    pub variances: VarianceEstimates,
    pub gamma: f64,
    pub constants: Option<TheoryConstants>,
    pub warnings: Vec<String>,
}

impl Experiment {
    /// Builds topology, `W`, problem and constants. Fails before anything
    /// runs if `W` is invalid for a decentralized algorithm.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let algorithms = config.algorithms();
        let topology = Topology::build(config.topology.kind, config.topology.n)?;
        let mixing = MixingMatrix::build(&topology, config.mixing_scheme)?;
        let report = mixing.validate();
        let mut warnings = Vec::new();
        if !report.is_valid() {
            let reasons = report.failures().join("; ");
            if algorithms.iter().any(Algorithm::is_decentralized) || config.gamma == Gamma::Auto {
                return Err(Error::ValidationFailed(reasons));
            }
            warnings.push(format!("mixing matrix is invalid ({reasons}); unused by cpsgd"));
        }

        let problem_spec = config.problem_spec()?;
        let problem = problem_spec.generate()?;
        let smallest = (0..problem.n()).map(|i| problem.shard_len(i)).min().unwrap_or(0);
        if config.batch_size > smallest {
            return Err(Error::config(
                "batch_size",
                format!("{} exceeds the smallest shard ({smallest} samples)", config.batch_size),
            ));
        }
        let batch = BatchMode::for_batch_size(&problem, config.batch_size);

        let streams = SampleStreams::new(config.seed);
        let origin = nalgebra::DVector::zeros(problem.dim());
        let singleton = estimate_variances(
            &problem,
            &[origin],
            VARIANCE_SAMPLES,
            &mut streams.auxiliary(VARIANCE_STREAM),
        )?;
        let sigma_sq = match batch {
            BatchMode::Full => 0.0,
            BatchMode::Minibatch(b) => singleton.sigma_sq / b as f64,
        };
        let variances = VarianceEstimates {
            sigma_sq,
            zeta0: singleton.zeta0,
        };

        let l = problem.smoothness();
        let gamma = match config.gamma {
            Gamma::Fixed(g) => g,
            Gamma::Auto => {
                let sc = SpectralConstants::of(&mixing)?;
                recommended_stepsize(sc.c1, sc.c2, l, sigma_sq.sqrt(), config.iterations, problem.n())?
            }
        };
        let constants = if report.is_valid() {
            match theory_constants(&mixing, l, gamma) {
                Ok(c) => Some(c),
                Err(Error::StepsizeTooLarge { c3 }) => {
                    warnings.push(format!("C3 = {c3} at gamma = {gamma}; theory constants unavailable"));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        Ok(Self {
            config: config.clone(),
            problem_spec,
            topology,
            mixing,
            problem,
            batch,
            variances,
            gamma,
            constants,
            warnings,
        })
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        self.config.algorithms()
    }

    fn settings(&self, algorithm: Algorithm) -> RunSettings {
        RunSettings {
            algorithm,
            gamma: self.gamma,
            iterations: self.config.iterations,
            batch: self.batch,
            seed: self.config.seed,
            log_every: self.config.log_every,
        }
    }

    /// Runs a single algorithm.
    pub fn run_one(&self, algorithm: Algorithm) -> Result<Trajectory> {
        let out = optimizers::run(&self.problem, &self.mixing, &self.settings(algorithm), &mut ())?;
        let mut warnings = self.warnings.clone();
        warnings.extend(out.warnings);
        Ok(Trajectory {
            config: self.config.clone(),
            problem: self.problem_spec.clone(),
            algorithm,
            gamma: self.gamma,
            records: out.records,
            variances: self.variances,
            constants: self.constants,
            warnings,
        })
    }

    /// Runs every configured algorithm, one thread each. Results come back
    /// in `d2, dpsgd, cpsgd` order and do not depend on scheduling, since
    /// every run reads the same immutable inputs and keyed sample streams.
    pub fn run(&self) -> Result<Vec<Trajectory>> {
        let algorithms = self.algorithms();
        if algorithms.len() == 1 {
            return Ok(vec![self.run_one(algorithms[0])?]);
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = algorithms
                .iter()
                .map(|&a| scope.spawn(move || self.run_one(a)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("optimizer thread panicked"))
                .collect()
        })
    }
}

/// Prepares and runs a config, then writes CSV to `config.out` if set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    let trajectories = Experiment::prepare(config)?.run()?;
    if let Some(out) = &config.out {
        write_csv_file(out, &trajectories)?;
    }
    Ok(trajectories)
}

/// Like [`run_experiment`] with the output path overridden.
pub fn run_experiment_to(config: &ExperimentConfig, out: &Path) -> Result<Vec<Trajectory>> {
    let mut config = config.clone();
    config.out = Some(out.to_path_buf());
    run_experiment(&config)
}
