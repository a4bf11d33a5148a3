//! Deterministic simulator for decentralized stochastic optimization.
//!
//! The crate runs D² (D-PSGD with a one-step correction on the previous
//! model and gradient), plain D-PSGD and centralized parallel SGD over a
//! simulated network of workers that gossip through a symmetric mixing
//! matrix. Everything is a pure function of its seeds, so algorithm
//! comparisons can share sample sequences exactly.
//!
//! Layout:
//! - [`mixing`]: topologies, mixing matrices, a Jacobi eigensolver and the
//!   spectral constants that govern the D² step size.
//! - [`problems`]: synthetic least-squares and label-partitioned logistic
//!   regression instances with exact and stochastic gradient oracles.
//! - [`optimizers`]: the per-round state transitions and the run loop.
//! - [`metrics`]: exact full-batch convergence quantities.
//! - [`lemma_oracles`]: executable checks of the recurrence, geometric-sum
//!   and rotation-invariance lemmas used in the analysis.
//! - [`harness`]: JSON configs, presets, CSV output and comparison reports.

pub mod error;
pub mod harness;
pub mod lemma_oracles;
pub mod metrics;
pub mod mixing;
pub mod optimizers;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, Trajectory};
pub use metrics::MetricRecord;
pub use mixing::{MixingMatrix, MixingScheme, TheoryConstants, Topology, TopologyKind};
pub use optimizers::{Algorithm, OptimizerState};
pub use problems::{ProblemInstance, ProblemSpec};
