//! Worker topologies, gossip matrices and their spectral analysis.

mod constants;
pub mod eigen;
mod matrix;
mod topology;

pub use constants::{recommended_stepsize, theory_constants, SpectralConstants, TheoryConstants, ZERO_EIGENVALUE_TOL};
pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use matrix::{
    Check, MatrixDump, MixingMatrix, MixingScheme, ValidationReport, LAMBDA_N_BOUND, PROPERTY_TOL,
};
pub use topology::{Topology, TopologyKind};
