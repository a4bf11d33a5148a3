//! Bundled configs: the two data regimes on a ring plus a noiseless
//! quadratic for rate checks.

use super::config::{AlgorithmChoice, ExperimentConfig, Gamma, ProblemConfig, TopologyConfig};
use crate::error::{Error, Result};
use crate::mixing::{MixingScheme, TopologyKind};
use crate::problems::ProblemKind;

pub const PRESET_NAMES: [&str; 3] = ["unshuffled-ring", "shuffled-ring", "deterministic-quadratic"];

fn label_partition(shuffled: bool) -> ExperimentConfig {
    ExperimentConfig {
        algorithm: AlgorithmChoice::All,
        topology: TopologyConfig {
            kind: TopologyKind::Ring,
            n: 5,
        },
        mixing_scheme: MixingScheme::UniformNeighbor,
        problem: ProblemConfig {
            kind: ProblemKind::LabelPartition,
            dim: 10,
            n_workers: Some(5),
            samples_per_worker: 80,
            heterogeneity: Some(2.0),
            noise: Some(1.0),
            classes: Some(10),
            shuffled: Some(shuffled),
            seed: Some(17),
        },
        gamma: Gamma::Fixed(2.0),
        iterations: 2000,
        batch_size: 72,
        log_every: 10,
        seed: 2018,
        out: None,
    }
}

/// Least squares with per-worker target shifts and exact local gradients.
fn deterministic_quadratic() -> ExperimentConfig {
    ExperimentConfig {
        algorithm: AlgorithmChoice::All,
        topology: TopologyConfig {
            kind: TopologyKind::Ring,
            n: 5,
        },
        mixing_scheme: MixingScheme::UniformNeighbor,
        problem: ProblemConfig {
            kind: ProblemKind::LeastSquares,
            dim: 5,
            n_workers: Some(5),
            samples_per_worker: 50,
            heterogeneity: Some(1.0),
            noise: Some(0.0),
            classes: None,
            shuffled: None,
            seed: Some(5),
        },
        gamma: Gamma::Fixed(0.03),
        iterations: 5000,
        batch_size: 50,
        log_every: 1,
        seed: 5,
        out: None,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "unshuffled-ring" => Ok(label_partition(false)),
        "shuffled-ring" => Ok(label_partition(true)),
        "deterministic-quadratic" => Ok(deterministic_quadratic()),
        _ => Err(Error::InvalidArgument(format!(
            "unknown preset `{name}`, expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESET_NAMES {
            let c = preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c, "{name}");
        }
        assert!(preset("cifar").is_err());
    }
}
