//! Spectral constants of the D² convergence bound and the step size that
//! keeps every term of it under control.

use serde::Serialize;

use super::matrix::MixingMatrix;
use crate::error::{Error, Result};

/// `C₁, C₂` and the ingredients they are built from. Depends on `W` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralConstants {
    /// Second-largest eigenvalue of `W`.
    pub lambda: f64,
    /// Smallest eigenvalue of `W`.
    pub lambda_n: f64,
    /// `λₙ − √(λₙ² − λₙ)`; only defined when `λₙ < 0`.
    pub v: Option<f64>,
    pub c1: f64,
    pub c2: f64,
}

/// Eigenvalues this close to zero are treated as zero by the constants.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-14;

impl SpectralConstants {
    /// Requires `λ < 1` and `λₙ > −1/3`.
    ///
    /// The `|v|` branch of each max only exists for negative eigenvalues;
    /// with `λₙ ≥ 0` the constants come from the `λ` branch alone. A
    /// negative `λ` contributes nothing to the positive branch, which is
    /// evaluated at `max(λ, 0)`. Eigenvalues within [`ZERO_EIGENVALUE_TOL`]
    /// of zero are solver round-off and are taken as exactly zero.
    pub fn from_eigenvalues(lambda: f64, lambda_n: f64) -> Result<Self> {
        let snap = |x: f64| if x.abs() <= ZERO_EIGENVALUE_TOL { 0.0 } else { x };
        let (lambda, lambda_n) = (snap(lambda), snap(lambda_n));
        if !(lambda < 1.0) {
            return Err(Error::ValidationFailed(format!("λ = {lambda} ≥ 1")));
        }
        if !(lambda_n > -1.0 / 3.0) {
            return Err(Error::ValidationFailed(format!("λₙ = {lambda_n} ≤ −1/3")));
        }
        let lp = lambda.max(0.0);
        let c1_pos = 1.0 / ((1.0 - lp) * (1.0 - lp));
        let root = 1.0 - lp.sqrt();
        let c2_pos = lp * lp / (root * root * (1.0 - lp));
        let (v, c1, c2) = if lambda_n < 0.0 {
            let v = lambda_n - (lambda_n * lambda_n - lambda_n).sqrt();
            let abs_v = (lambda_n * lambda_n - lambda_n).sqrt() - lambda_n;
            let denom = 1.0 - abs_v * abs_v;
            (
                Some(v),
                c1_pos.max(1.0 / denom),
                c2_pos.max(lambda_n * lambda_n / denom),
            )
        } else {
            (None, c1_pos, c2_pos)
        };
        Ok(Self {
            lambda,
            lambda_n,
            v,
            c1,
            c2,
        })
    }

    pub fn of(w: &MixingMatrix) -> Result<Self> {
        w.validate().ensure_valid()?;
        Self::from_eigenvalues(w.lambda(), w.lambda_n())
    }
}

/// Everything the D² bound needs for one `(W, L, γ)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub lambda: f64,
    pub lambda_n: f64,
    pub v: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    /// `1 − 24·C₂·γ²L²`
    pub c3: f64,
    /// `1 − 6L²C₁γ²/C₃`
    pub a1: f64,
    /// `1 − Lγ − 6L²C₂γ⁴L²/C₃`
    pub a2: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl TheoryConstants {
    pub fn new(spectral: SpectralConstants, l: f64, gamma: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("L must be positive, got {l}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        let SpectralConstants {
            lambda,
            lambda_n,
            v,
            c1,
            c2,
        } = spectral;
        let gl_sq = gamma * gamma * l * l;
        let c3 = 1.0 - 24.0 * c2 * gl_sq;
        if !(c3 > 0.0) {
            return Err(Error::StepsizeTooLarge { c3 });
        }
        let a1 = 1.0 - 6.0 * c1 * gl_sq / c3;
        let a2 = 1.0 - l * gamma - 6.0 * c2 * gl_sq * gl_sq / c3;
        Ok(Self {
            lambda,
            lambda_n,
            v,
            c1,
            c2,
            gamma,
            c3,
            a1,
            a2,
            l,
        })
    }
}

pub fn theory_constants(w: &MixingMatrix, l: f64, gamma: f64) -> Result<TheoryConstants> {
    TheoryConstants::new(SpectralConstants::of(w)?, l, gamma)
}

/// `γ = 1 / (8√C₂·L + 6√C₁·L + σ√(T/n))`.
pub fn recommended_stepsize(c1: f64, c2: f64, l: f64, sigma: f64, t: usize, n: usize) -> Result<f64> {
    if !(c1 >= 1.0) || !(c2 >= 0.0) || !(l > 0.0) || !(sigma >= 0.0) || t == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "recommended_stepsize needs C1 ≥ 1, C2 ≥ 0, L > 0, σ ≥ 0, T ≥ 1, n ≥ 1 \
             (got C1={c1}, C2={c2}, L={l}, σ={sigma}, T={t}, n={n})"
        )));
    }
    let denom = 8.0 * c2.sqrt() * l + 6.0 * c1.sqrt() * l + sigma * (t as f64 / n as f64).sqrt();
    Ok(1.0 / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{MixingScheme, Topology, TopologyKind};

    fn mean_all(n: usize) -> MixingMatrix {
        MixingMatrix::build(
            &Topology::build(TopologyKind::Complete, n).unwrap(),
            MixingScheme::MeanAll,
        )
        .unwrap()
    }

    fn ring5() -> MixingMatrix {
        MixingMatrix::build(
            &Topology::build(TopologyKind::Ring, 5).unwrap(),
            MixingScheme::UniformNeighbor,
        )
        .unwrap()
    }

    #[test]
    fn mean_all_constants() {
        let c = theory_constants(&mean_all(4), 1.0, 0.1).unwrap();
        assert_eq!(c.c1, 1.0);
        assert_eq!(c.c2, 0.0);
        assert_eq!(c.c3, 1.0);
        assert!((c.a1 - 0.94).abs() < 1e-15);
        assert!((c.a2 - 0.9).abs() < 1e-15);
        assert_eq!(c.v, None);
    }

    #[test]
    fn ring5_constants() {
        // frozen from an independent LAPACK eigensolve of the 5x5 circulant
        // followed by direct evaluation of the definitions
        let s = SpectralConstants::of(&ring5()).unwrap();
        assert!((s.v.unwrap() + 0.704_460_923_323_705_4).abs() < 1e-10, "{:?}", s.v);
        assert!((s.c1 - 4.712_461_179_749_811).abs() < 1e-9, "{}", s.c1);
        assert!((s.c2 - 8.951_656_802_425_408).abs() < 1e-9, "{}", s.c2);
        // the λ branch dominates both maxima on this ring
        let l = s.lambda;
        assert_eq!(s.c1, 1.0 / ((1.0 - l) * (1.0 - l)));
    }

    #[test]
    fn c1_diverges_toward_minus_third() {
        let mut last = 0.0;
        for ln in [-0.2, -0.3, -0.33, -0.333, -0.3333, -0.33333] {
            let s = SpectralConstants::from_eigenvalues(0.0, ln).unwrap();
            assert!(s.c1 > last);
            last = s.c1;
        }
        assert!(last > 1e4);
        assert!(SpectralConstants::from_eigenvalues(0.0, -1.0 / 3.0).is_err());
        assert!(SpectralConstants::from_eigenvalues(1.0, 0.0).is_err());
    }

    #[test]
    fn nonnegative_lambda_n_uses_second_branch() {
        let s = SpectralConstants::from_eigenvalues(0.25, 0.1).unwrap();
        assert_eq!(s.c1, 1.0 / (0.75 * 0.75));
        assert_eq!(s.c2, 0.0625 / (0.25 * 0.75));
        assert!(s.c1 >= 1.0);
    }

    #[test]
    fn oversized_stepsize_rejected() {
        let err = theory_constants(&ring5(), 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::StepsizeTooLarge { .. }));
        assert!(theory_constants(&ring5(), 0.0, 0.1).is_err());
        assert!(theory_constants(&ring5(), 1.0, -0.1).is_err());
    }

    #[test]
    fn scale_consistency() {
        let w = ring5();
        for &(l, g) in &[(1.0, 0.01), (2.5, 0.003), (0.3, 0.05)] {
            let a = theory_constants(&w, l, g).unwrap();
            let b = theory_constants(&w, 2.0 * l, g / 2.0).unwrap();
            assert!((a.c3 - b.c3).abs() < 1e-15);
        }
    }

    #[test]
    fn stepsize_examples() {
        assert_eq!(recommended_stepsize(1.0, 0.0, 1.0, 1.0, 1000, 10).unwrap(), 0.0625);
        for (t, n) in [(1, 1), (100, 3), (1_000_000, 7)] {
            assert_eq!(recommended_stepsize(1.0, 0.0, 1.0, 0.0, t, n).unwrap(), 1.0 / 6.0);
        }
        assert!(recommended_stepsize(0.5, 0.0, 1.0, 0.0, 1, 1).is_err());
        assert!(recommended_stepsize(1.0, 0.0, 1.0, 0.0, 0, 1).is_err());
    }

    #[test]
    fn stepsize_monotonicity() {
        let g = |sigma, t, n| recommended_stepsize(4.0, 9.0, 1.5, sigma, t, n).unwrap();
        assert!(g(2.0, 100, 4) < g(1.0, 100, 4));
        assert!(g(1.0, 200, 4) < g(1.0, 100, 4));
        assert!(g(1.0, 100, 8) > g(1.0, 100, 4));
    }

    #[test]
    fn recommended_stepsize_keeps_c3_above_half() {
        let s = SpectralConstants::of(&ring5()).unwrap();
        let l = 2.0;
        let gamma = recommended_stepsize(s.c1, s.c2, l, 0.5, 1000, 5).unwrap();
        assert!(s.c2 * gamma * gamma * l * l <= 1.0 / 64.0);
        assert!(s.c1 * gamma * gamma * l * l <= 1.0 / 36.0);
        let c = TheoryConstants::new(s, l, gamma).unwrap();
        assert!(c.c3 >= 0.5);
    }
}
