use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::eigen::{max_asymmetry, symmetric_eigen, SymmetricEigen};
use super::topology::{Topology, TopologyKind};
use crate::error::{Error, Result};

/// Tolerance for symmetry and `W𝟙 = 𝟙` checks on constructed matrices.
pub const PROPERTY_TOL: f64 = 1e-10;
/// Lower bound on the smallest eigenvalue required by the D² analysis.
pub const LAMBDA_N_BOUND: f64 = -1.0 / 3.0;
/// Margin applied to the strict spectral inequalities so that values equal
/// to a bound up to rounding are rejected deterministically.
pub const SPECTRAL_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingScheme {
    /// Weight `1/(deg+1)` on self and on every neighbor.
    UniformNeighbor,
    /// `(W̃ + I)/2` where `W̃` holds Metropolis–Hastings weights.
    LazyMetropolis,
    /// `𝟙𝟙ᵀ/n`; complete topologies only.
    MeanAll,
}

impl MixingScheme {
    pub fn name(&self) -> &'static str {
        match self {
            MixingScheme::UniformNeighbor => "uniform-neighbor",
            MixingScheme::LazyMetropolis => "lazy-metropolis",
            MixingScheme::MeanAll => "mean-all",
        }
    }
}

impl fmt::Display for MixingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MixingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-neighbor" => Ok(MixingScheme::UniformNeighbor),
            "lazy-metropolis" => Ok(MixingScheme::LazyMetropolis),
            "mean-all" => Ok(MixingScheme::MeanAll),
            other => Err(Error::InvalidArgument(format!("unknown mixing scheme {other:?}"))),
        }
    }
}

/// Symmetric gossip matrix `W` together with its eigen-decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    kind: TopologyKind,
    weights: DMatrix<f64>,
    eigen: SymmetricEigen,
    /// For each output column `j`, the `(i, W_ij)` pairs with `W_ij ≠ 0`.
    incoming: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    pub fn build(topology: &Topology, scheme: MixingScheme) -> Result<Self> {
        let n = topology.n();
        let mut w = DMatrix::zeros(n, n);
        match scheme {
            MixingScheme::UniformNeighbor => {
                for i in 0..n {
                    let share = 1.0 / (topology.degree(i) + 1) as f64;
                    w[(i, i)] = share;
                    for j in topology.neighbors(i) {
                        w[(i, j)] = share;
                    }
                }
            }
            MixingScheme::LazyMetropolis => {
                let deg: Vec<usize> = (0..n).map(|i| topology.degree(i)).collect();
                for (i, j) in topology.edges() {
                    let x = 0.5 / (1 + deg[i].max(deg[j])) as f64;
                    w[(i, j)] = x;
                    w[(j, i)] = x;
                }
                for i in 0..n {
                    let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
                    w[(i, i)] = 1.0 - off;
                }
            }
            MixingScheme::MeanAll => {
                if topology.kind() != TopologyKind::Complete {
                    return Err(Error::InvalidArgument(format!(
                        "mean-all mixing needs a complete topology, got {}",
                        topology.kind()
                    )));
                }
                w.fill(1.0 / n as f64);
            }
        }
        Self::from_topology_weights(topology, w, scheme.name())
    }

    /// Every worker keeps `self_weight` and splits the rest evenly over its
    /// neighbors. Only regular graphs give a symmetric result.
    pub fn uniform_neighbor_with_self_weight(topology: &Topology, self_weight: f64) -> Result<Self> {
        let n = topology.n();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let nbrs = topology.neighbors(i);
            if nbrs.is_empty() {
                w[(i, i)] = 1.0;
                continue;
            }
            w[(i, i)] = self_weight;
            let share = (1.0 - self_weight) / nbrs.len() as f64;
            for j in nbrs {
                w[(i, j)] = share;
            }
        }
        Self::from_topology_weights(topology, w, "uniform-neighbor (self-weight override)")
    }

    fn from_topology_weights(topology: &Topology, w: DMatrix<f64>, scheme: &str) -> Result<Self> {
        let n = topology.n();
        for i in 0..n {
            for j in 0..n {
                if i != j && w[(i, j)] != 0.0 && !topology.has_edge(i, j) {
                    return Err(Error::InvalidMatrix(format!(
                        "{scheme} put weight on non-edge ({i}, {j})"
                    )));
                }
            }
        }
        let asym = max_asymmetry(&w);
        if asym > PROPERTY_TOL {
            return Err(Error::InvalidMatrix(format!(
                "{scheme} on a {} topology is asymmetric (max |W_ij - W_ji| = {asym:e})",
                topology.kind()
            )));
        }
        let row_err = max_row_sum_error(&w);
        if row_err > PROPERTY_TOL {
            return Err(Error::InvalidMatrix(format!(
                "{scheme} rows do not sum to one (max error {row_err:e})"
            )));
        }
        Self::from_weights(topology.kind(), w)
    }

    /// Wraps an arbitrary symmetric matrix. Stochasticity and the spectral
    /// conditions are left to [`MixingMatrix::validate`].
    pub fn from_weights(kind: TopologyKind, weights: DMatrix<f64>) -> Result<Self> {
        let eigen = symmetric_eigen(&weights)?;
        let n = weights.nrows();
        let incoming = (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&i| weights[(i, j)] != 0.0)
                    .map(|i| (i, weights[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self {
            kind,
            weights,
            eigen,
            incoming,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Nonincreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigen.vectors
    }

    pub fn eigen(&self) -> &SymmetricEigen {
        &self.eigen
    }

    /// Second-largest eigenvalue (`λ`); `λ₁` itself when `n = 1`.
    pub fn lambda(&self) -> f64 {
        let ev = &self.eigen.values;
        ev.get(1).copied().unwrap_or(ev[0])
    }

    pub fn lambda_n(&self) -> f64 {
        *self.eigen.values.last().expect("nonempty spectrum")
    }

    /// `X·W` where column `i` of `x` is worker `i`'s vector. Each output
    /// column only reads the columns of workers it has nonzero weight on,
    /// accumulated in increasing worker order.
    pub fn gossip(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n() {
            return Err(Error::Dimension(format!(
                "gossip over {} workers given {} columns",
                self.n(),
                x.ncols()
            )));
        }
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (j, sources) in self.incoming.iter().enumerate() {
            let mut col = out.column_mut(j);
            for &(i, wij) in sources {
                col.axpy(wij, &x.column(i), 1.0);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> ValidationReport {
        ValidationReport::of(self)
    }

    pub fn to_dump(&self) -> MatrixDump {
        MatrixDump {
            n: self.n(),
            kind: self.kind,
            weights: self
                .weights
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            eigenvalues: self.eigen.values.clone(),
        }
    }

    /// Rebuilds from a dump, recomputing the spectrum and checking it
    /// against the stored eigenvalues.
    pub fn from_dump(dump: &MatrixDump) -> Result<Self> {
        let n = dump.n;
        if n == 0 {
            return Err(Error::InvalidMatrix("n must be positive".into()));
        }
        if dump.weights.len() != n || dump.weights.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("weights must be {n}x{n}")));
        }
        if dump.eigenvalues.len() != n {
            return Err(Error::Dimension(format!("expected {n} eigenvalues")));
        }
        let w = DMatrix::from_fn(n, n, |i, j| dump.weights[i][j]);
        let m = Self::from_weights(dump.kind, w)?;
        let drift = m
            .eigen
            .values
            .iter()
            .zip(&dump.eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if !(drift <= 1e-8) {
            return Err(Error::InvalidMatrix(format!(
                "stored eigenvalues disagree with the weights by {drift:e}"
            )));
        }
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: MatrixDump = serde_json::from_str(text)?;
        Self::from_dump(&dump)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_dump()).expect("dump serializes")
    }
}

/// JSON form: `{"n", "kind", "weights" (row-major), "eigenvalues"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDump {
    pub n: usize,
    pub kind: TopologyKind,
    pub weights: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

pub fn max_row_sum_error(w: &DMatrix<f64>) -> f64 {
    w.row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0f64, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

/// Outcome of checking the conditions the D² analysis places on `W`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub lambda: f64,
    pub lambda_n: f64,
    pub symmetric: Check,
    pub row_stochastic: Check,
    pub lambda_below_one: Check,
    pub lambda_n_above_bound: Check,
}

impl ValidationReport {
    fn of(w: &MixingMatrix) -> Self {
        let asym = max_asymmetry(&w.weights);
        let row_err = max_row_sum_error(&w.weights);
        let lambda = w.lambda();
        let lambda_n = w.lambda_n();
        let n = w.n();
        // a single worker has no second eigenvalue to bound
        let lambda_ok = n == 1 || lambda < 1.0 - SPECTRAL_MARGIN;
        let lambda_n_ok = lambda_n > LAMBDA_N_BOUND + SPECTRAL_MARGIN;
        Self {
            n,
            lambda,
            lambda_n,
            symmetric: Check {
                passed: asym <= PROPERTY_TOL,
                detail: format!("max |W_ij - W_ji| = {asym:e}"),
            },
            row_stochastic: Check {
                passed: row_err <= PROPERTY_TOL,
                detail: format!("max |sum_j W_ij - 1| = {row_err:e}"),
            },
            lambda_below_one: Check {
                passed: lambda_ok,
                detail: if lambda_ok {
                    format!("λ = {} < 1", fmt_g(lambda))
                } else {
                    format!("λ = {} ≥ 1", fmt_g(lambda))
                },
            },
            lambda_n_above_bound: Check {
                passed: lambda_n_ok,
                detail: if lambda_n_ok {
                    format!("λₙ = {} > −1/3", fmt_g(lambda_n))
                } else {
                    format!("λₙ = {} ≤ −1/3", fmt_g(lambda_n))
                },
            },
        }
    }

    pub fn checks(&self) -> [(&'static str, &Check); 4] {
        [
            ("symmetric", &self.symmetric),
            ("row_stochastic", &self.row_stochastic),
            ("lambda_below_one", &self.lambda_below_one),
            ("lambda_n_above_minus_third", &self.lambda_n_above_bound),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks()
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(_, c)| c.detail.clone())
            .collect()
    }

    /// Turns a failed report into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::ValidationFailed(self.failures().join("; ")))
        }
    }

    pub fn to_key_value_lines(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n={}\n", self.n));
        out.push_str(&format!("lambda={}\n", fmt_g(self.lambda)));
        out.push_str(&format!("lambda_n={}\n", fmt_g(self.lambda_n)));
        for (name, c) in self.checks() {
            out.push_str(&format!("{name}={}\n", if c.passed { "pass" } else { "fail" }));
        }
        out.push_str(&format!("valid={}\n", self.is_valid()));
        for f in self.failures() {
            out.push_str(&format!("reason={f}\n"));
        }
        out
    }
}

/// Shortest representation, with tiny rounding residue snapped to a short
/// decimal so `-1` does not print as `-0.9999999999999998`.
fn fmt_g(x: f64) -> String {
    let rounded = (x * 1e12).round() / 1e12;
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ring(n: usize) -> Topology {
        Topology::build(TopologyKind::Ring, n).unwrap()
    }

    fn complete(n: usize) -> Topology {
        Topology::build(TopologyKind::Complete, n).unwrap()
    }

    fn assert_invariants(w: &MixingMatrix) {
        let n = w.n();
        let m = w.weights();
        assert!(max_asymmetry(m) <= 1e-12);
        assert!(max_row_sum_error(m) <= 1e-10);
        assert!((w.eigenvalues()[0] - 1.0).abs() <= 1e-10);
        let v1 = w.eigenvectors().column(0);
        let target = 1.0 / (n as f64).sqrt();
        assert!(v1.iter().all(|x| (x - target).abs() <= 1e-8), "{v1:?}");
        let p = w.eigenvectors();
        let ppt = p * p.transpose();
        assert!((ppt - DMatrix::identity(n, n)).amax() <= 1e-8);
        assert!((w.eigen().reconstruct() - m).amax() <= 1e-8);
    }

    #[test]
    fn mean_all_spectrum() {
        let w = MixingMatrix::build(&complete(4), MixingScheme::MeanAll).unwrap();
        assert_invariants(&w);
        let ev = w.eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!(ev[1..].iter().all(|x| x.abs() < 1e-12));
        let r = w.validate();
        assert!(r.is_valid());
        assert!(r.lambda.abs() < 1e-12 && r.lambda_n.abs() < 1e-12);
    }

    #[test]
    fn ring5_uniform_matches_circulant_formula() {
        let w = MixingMatrix::build(&ring(5), MixingScheme::UniformNeighbor).unwrap();
        assert_invariants(&w);
        assert!((0..5).all(|i| (w.weights()[(i, i)] - 1.0 / 3.0).abs() < 1e-15));
        let mut expected: Vec<f64> = (0..5)
            .map(|k| (1.0 + 2.0 * (2.0 * PI * k as f64 / 5.0).cos()) / 3.0)
            .collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in w.eigenvalues().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w.lambda() - 0.539_344_662_916_631_6).abs() < 1e-12);
        assert!((w.lambda_n() + 0.206_011_329_583_298_4).abs() < 1e-12);
        assert!(w.validate().is_valid());
    }

    #[test]
    fn ring4_zero_self_weight_rejected() {
        let w = MixingMatrix::uniform_neighbor_with_self_weight(&ring(4), 0.0).unwrap();
        assert!((w.lambda_n() + 1.0).abs() < 1e-12);
        let r = w.validate();
        assert!(!r.is_valid());
        assert!(r.symmetric.passed && r.row_stochastic.passed && r.lambda_below_one.passed);
        assert_eq!(r.failures(), vec!["λₙ = -1 ≤ −1/3".to_string()]);
        assert!(r.ensure_valid().is_err());
    }

    #[test]
    fn odd_rings_pass_spectral_gate() {
        for n in (3..=64).step_by(2) {
            let w = MixingMatrix::build(&ring(n), MixingScheme::UniformNeighbor).unwrap();
            assert!(w.validate().is_valid(), "n={n}");
            assert!(w.lambda_n() > -1.0 / 3.0);
        }
    }

    #[test]
    fn even_rings_sit_exactly_on_the_bound() {
        // k = n/2 gives (1 + 2cos π)/3 = -1/3
        for n in (4..=64).step_by(2) {
            let w = MixingMatrix::build(&ring(n), MixingScheme::UniformNeighbor).unwrap();
            assert!((w.lambda_n() + 1.0 / 3.0).abs() < 1e-12, "n={n}");
            assert!(!w.validate().lambda_n_above_bound.passed);
        }
    }

    #[test]
    fn lazy_metropolis_is_valid_everywhere() {
        for t in [ring(6), ring(7), complete(5), Topology::build(TopologyKind::Star, 6).unwrap()] {
            let w = MixingMatrix::build(&t, MixingScheme::LazyMetropolis).unwrap();
            assert_invariants(&w);
            assert!(w.lambda_n() >= -1e-12);
            assert!(w.validate().is_valid());
        }
    }

    #[test]
    fn scheme_errors() {
        assert!(MixingMatrix::build(&ring(5), MixingScheme::MeanAll).is_err());
        let star = Topology::build(TopologyKind::Star, 4).unwrap();
        assert!(matches!(
            MixingMatrix::build(&star, MixingScheme::UniformNeighbor),
            Err(Error::InvalidMatrix(_))
        ));
    }

    #[test]
    fn gossip_matches_dense_product() {
        let w = MixingMatrix::build(&ring(6), MixingScheme::LazyMetropolis).unwrap();
        let x = DMatrix::from_fn(3, 6, |i, j| (i * 7 + j * 3) as f64 - 4.5);
        let dense = &x * w.weights();
        assert!((w.gossip(&x).unwrap() - dense).amax() < 1e-14);
        assert!(w.gossip(&DMatrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn reconstruction_validates_the_same() {
        for w in [
            MixingMatrix::build(&ring(5), MixingScheme::UniformNeighbor).unwrap(),
            MixingMatrix::uniform_neighbor_with_self_weight(&ring(4), 0.0).unwrap(),
            MixingMatrix::build(&complete(4), MixingScheme::MeanAll).unwrap(),
        ] {
            let rebuilt = MixingMatrix::from_weights(w.kind(), w.eigen().reconstruct()).unwrap();
            assert_eq!(w.validate().is_valid(), rebuilt.validate().is_valid());
        }
    }

    #[test]
    fn dump_round_trip() {
        let w = MixingMatrix::build(&ring(5), MixingScheme::UniformNeighbor).unwrap();
        let json = w.to_json();
        assert!(json.starts_with(r#"{"n":5,"kind":"ring","weights":[["#));
        let back = MixingMatrix::from_json(&json).unwrap();
        assert_eq!(back.weights(), w.weights());
        let mut dump = w.to_dump();
        dump.eigenvalues[0] = 7.0;
        assert!(MixingMatrix::from_dump(&dump).is_err());
        dump.weights.pop();
        assert!(MixingMatrix::from_dump(&dump).is_err());
    }

    #[test]
    fn key_value_report() {
        let w = MixingMatrix::build(&complete(4), MixingScheme::MeanAll).unwrap();
        let text = w.validate().to_key_value_lines();
        assert!(text.contains("valid=true\n"));
        assert!(text.contains("lambda_n_above_minus_third=pass\n"));
    }
}
