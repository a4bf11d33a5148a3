//! Experiment configuration: the JSON schema read by `d2sim run`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::{MixingScheme, TopologyKind};
use crate::optimizers::Algorithm;
use crate::problems::{LabelPartitionParams, LeastSquaresParams, ProblemKind, ProblemSpec};

/// Which algorithms a config runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AlgorithmChoice {
    One(Algorithm),
    /// D², D-PSGD and C-PSGD on shared sample streams.
    All,
}

impl AlgorithmChoice {
    pub fn algorithms(&self) -> Vec<Algorithm> {
        match self {
            AlgorithmChoice::One(a) => vec![*a],
            AlgorithmChoice::All => Algorithm::ALL.to_vec(),
        }
    }
}

impl TryFrom<String> for AlgorithmChoice {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(AlgorithmChoice::All);
        }
        s.parse()
            .map(AlgorithmChoice::One)
            .map_err(|_| format!("unknown algorithm `{s}`, expected d2, dpsgd, cpsgd or all"))
    }
}

impl From<AlgorithmChoice> for String {
    fn from(a: AlgorithmChoice) -> String {
        a.to_string()
    }
}

impl fmt::Display for AlgorithmChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmChoice::One(a) => f.write_str(a.name()),
            AlgorithmChoice::All => f.write_str("all"),
        }
    }
}

/// Step size: a number, or `"auto"` for the value derived from the mixing
/// constants, smoothness, σ, T and n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum Gamma {
    Fixed(f64),
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<GammaRepr> for Gamma {
    type Error = String;

    fn try_from(g: GammaRepr) -> std::result::Result<Self, String> {
        match g {
            GammaRepr::Number(x) => Ok(Gamma::Fixed(x)),
            GammaRepr::Text(s) if s == "auto" => Ok(Gamma::Auto),
            GammaRepr::Text(s) => Err(format!("gamma must be a number or \"auto\", got \"{s}\"")),
        }
    }
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Fixed(x) => GammaRepr::Number(x),
            Gamma::Auto => GammaRepr::Text("auto".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub n: usize,
}

/// Generator inputs. Which keys apply depends on `kind`:
///
/// - `least-squares`: `heterogeneity` shifts each worker's target model,
///   `noise` scales per-sample target noise. Both default to 0.
/// - `label-partition`: `classes` is required, `shuffled` defaults to
///   false. The pool holds `n_workers × samples_per_worker` samples split
///   evenly over classes; `heterogeneity` scales the class centers and
///   `noise` is the within-class spread (both default to 1).
///
/// `n_workers` defaults to `topology.n` and `seed` to the top-level seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_workers: Option<usize>,
    pub samples_per_worker: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProblemConfig {
    /// Resolves defaults into a generator spec for `n` workers.
    pub fn to_spec(&self, n: usize, default_seed: u64) -> Result<ProblemSpec> {
        if let Some(m) = self.n_workers {
            if m != n {
                return Err(Error::config(
                    "problem.n_workers",
                    format!("{m} workers but topology.n is {n}"),
                ));
            }
        }
        let seed = self.seed.unwrap_or(default_seed);
        for (field, value) in [("heterogeneity", self.heterogeneity), ("noise", self.noise)] {
            if let Some(x) = value {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::config(
                        format!("problem.{field}"),
                        format!("must be a finite nonnegative number, got {x}"),
                    ));
                }
            }
        }
        if self.samples_per_worker == 0 {
            return Err(Error::config("problem.samples_per_worker", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("problem.dim", "must be at least 1"));
        }
        let spec = match self.kind {
            ProblemKind::LeastSquares => {
                for (field, set) in [("classes", self.classes.is_some()), ("shuffled", self.shuffled.is_some())] {
                    if set {
                        return Err(Error::config(
                            format!("problem.{field}"),
                            "only applies to label-partition problems",
                        ));
                    }
                }
                ProblemSpec::least_squares(
                    n,
                    self.dim,
                    seed,
                    LeastSquaresParams {
                        samples_per_worker: self.samples_per_worker,
                        heterogeneity: self.heterogeneity.unwrap_or(0.0),
                        noise: self.noise.unwrap_or(0.0),
                    },
                )
            }
            ProblemKind::LabelPartition => {
                let classes = self
                    .classes
                    .ok_or_else(|| Error::config("problem.classes", "required for label-partition problems"))?;
                if classes == 0 {
                    return Err(Error::config("problem.classes", "must be at least 1"));
                }
                let total = n * self.samples_per_worker;
                if total % classes != 0 {
                    return Err(Error::config(
                        "problem.classes",
                        format!("{total} samples ({n} workers × {}) do not split evenly over {classes} classes", self.samples_per_worker),
                    ));
                }
                let shuffled = self.shuffled.unwrap_or(false);
                if !shuffled && classes % n != 0 {
                    return Err(Error::config(
                        "problem.classes",
                        format!("an unshuffled partition needs classes divisible by the {n} workers, got {classes}"),
                    ));
                }
                ProblemSpec::label_partition(
                    n,
                    self.dim,
                    seed,
                    LabelPartitionParams {
                        classes,
                        samples_per_class: total / classes,
                        shuffled,
                        separation: self.heterogeneity.unwrap_or(1.0),
                        spread: self.noise.unwrap_or(1.0),
                    },
                )
            }
        };
        spec.check().map_err(|e| Error::config("problem", e.to_string()))?;
        Ok(spec)
    }
}

fn one() -> usize {
    1
}

fn is_one(x: &usize) -> bool {
    *x == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmChoice,
    pub topology: TopologyConfig,
    pub mixing_scheme: MixingScheme,
    pub problem: ProblemConfig,
    pub gamma: Gamma,
    #[serde(rename = "T")]
    pub iterations: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub batch_size: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub log_every: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates. Syntax errors carry line and column; schema
    /// and semantic errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(if path == "." { "<root>".to_string() } else { path }, inner.to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without generating data.
    pub fn validate(&self) -> Result<()> {
        let TopologyConfig { kind, n } = self.topology;
        if kind == TopologyKind::Custom {
            return Err(Error::config(
                "topology.kind",
                "custom topologies need an explicit edge list and cannot be built from a config",
            ));
        }
        if n < kind.min_workers() {
            return Err(Error::config(
                "topology.n",
                format!("{} needs at least {} workers, got {n}", kind.name(), kind.min_workers()),
            ));
        }
        if self.mixing_scheme == MixingScheme::MeanAll && kind != TopologyKind::Complete {
            return Err(Error::config("mixing_scheme", "mean-all requires a complete topology"));
        }
        if let Gamma::Fixed(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config("gamma", format!("must be positive and finite, got {g}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::config("T", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be at least 1"));
        }
        self.problem_spec()?;
        Ok(())
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        self.problem.to_spec(self.topology.n, self.seed)
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        self.algorithm.algorithms()
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Config { path: field, message } => Error::config(field, format!("{message} (in {})", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "algorithm": "d2",
        "topology": {"kind": "ring", "n": 5},
        "mixing_scheme": "uniform-neighbor",
        "problem": {"kind": "least-squares", "dim": 4, "samples_per_worker": 8},
        "gamma": 0.05,
        "T": 10,
        "seed": 3
    }"#;

    fn with(key: &str, value: serde_json::Value) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v[key] = value;
        v.to_string()
    }

    fn err_path(text: &str) -> (String, String) {
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { path, message }) => (path, message),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_fills_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!((c.batch_size, c.log_every), (1, 1));
        assert_eq!(c.algorithm, AlgorithmChoice::One(Algorithm::D2));
        assert_eq!(c.gamma, Gamma::Fixed(0.05));
        assert_eq!(c.out, None);
        let spec = c.problem_spec().unwrap();
        assert_eq!((spec.n, spec.dim, spec.seed), (5, 4, 3));
    }

    #[test]
    fn round_trips() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["gamma"] = "auto".into();
        v["algorithm"] = "all".into();
        v["batch_size"] = 4.into();
        v["out"] = "/tmp/x.csv".into();
        v["gamma"] = serde_json::json!(0.1 + 0.2);
        let c = ExperimentConfig::from_json(&v.to_string()).unwrap();
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.gamma, Gamma::Fixed(0.1 + 0.2));
    }

    #[test]
    fn auto_gamma_parses() {
        let c = ExperimentConfig::from_json(&with("gamma", "auto".into())).unwrap();
        assert_eq!(c.gamma, Gamma::Auto);
        let (path, msg) = err_path(&with("gamma", "fast".into()));
        assert_eq!(path, "gamma");
        assert!(msg.contains("auto"), "{msg}");
    }

    #[test]
    fn unknown_key_is_named() {
        let (path, msg) = err_path(&with("learning_rate", 0.1.into()));
        assert!(msg.contains("learning_rate"), "{path}: {msg}");
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["problem"]["lr"] = 1.into();
        let (path, msg) = err_path(&v.to_string());
        assert!(path.starts_with("problem"), "{path}");
        assert!(msg.contains("lr"));
    }

    #[test]
    fn syntax_error_has_line() {
        let (_, msg) = err_path("{\n  \"algorithm\": \"d2\",\n  oops\n}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_fields() {
        let small_ring = with("topology", serde_json::json!({"kind": "ring", "n": 2}));
        assert_eq!(err_path(&small_ring).0, "topology.n");
        assert_eq!(err_path(&with("T", 0.into())).0, "T");
        assert_eq!(err_path(&with("gamma", (-1.0).into())).0, "gamma");
        assert_eq!(err_path(&with("mixing_scheme", "mean-all".into())).0, "mixing_scheme");
        assert_eq!(err_path(&with("algorithm", "sgd".into())).0, "algorithm");
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["problem"]["n_workers"] = 4.into();
        assert_eq!(err_path(&v.to_string()).0, "problem.n_workers");
        v["problem"]["n_workers"] = 5.into();
        v["problem"]["classes"] = 5.into();
        assert_eq!(err_path(&v.to_string()).0, "problem.classes");
    }

    #[test]
    fn label_partition_mapping() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["problem"] = serde_json::json!({
            "kind": "label-partition", "dim": 3, "samples_per_worker": 6,
            "classes": 10, "heterogeneity": 2.0, "noise": 0.5
        });
        let c = ExperimentConfig::from_json(&v.to_string()).unwrap();
        let spec = c.problem_spec().unwrap();
        assert_eq!(
            spec.params,
            crate::problems::ProblemParams::LabelPartition(LabelPartitionParams {
                classes: 10,
                samples_per_class: 3,
                shuffled: false,
                separation: 2.0,
                spread: 0.5,
            })
        );
        v["problem"]["classes"] = 4.into();
        assert_eq!(err_path(&v.to_string()).0, "problem.classes");
        v["problem"].as_object_mut().unwrap().remove("classes");
        assert_eq!(err_path(&v.to_string()).0, "problem.classes");
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, MINIMAL).unwrap();
        assert_eq!(load_config(&path).unwrap(), ExperimentConfig::from_json(MINIMAL).unwrap());
        assert!(matches!(load_config(dir.path().join("missing.json")), Err(Error::Io { .. })));
    }
}
