//! Synchronous-round state transitions for D², D-PSGD and centralized
//! parallel SGD.
//!
//! Models live in a `dim × n` matrix whose column `i` is worker `i`'s copy.
//! Steppers are pure: they take the current state and the gradients sampled
//! at it and return the next state. Sampling is done separately (see
//! [`sample_gradients`]) so different algorithms can be fed identical
//! minibatches.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, MetricRecord};
use crate::mixing::{theory_constants, MixingMatrix};
use crate::problems::ProblemInstance;
use crate::rng::SampleStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    D2,
    Dpsgd,
    Cpsgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::D2, Algorithm::Dpsgd, Algorithm::Cpsgd];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::D2 => "d2",
            Algorithm::Dpsgd => "dpsgd",
            Algorithm::Cpsgd => "cpsgd",
        }
    }

    pub fn is_decentralized(&self) -> bool {
        !matches!(self, Algorithm::Cpsgd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d2" => Ok(Algorithm::D2),
            "dpsgd" => Ok(Algorithm::Dpsgd),
            "cpsgd" => Ok(Algorithm::Cpsgd),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Column mean `X𝟙/n`. Returns the shared column unchanged when every
/// column is bitwise identical, so consensus states have exactly zero spread.
pub fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.ncols();
    let first = x.column(0);
    if (1..n).all(|j| x.column(j) == first) {
        return first.clone_owned();
    }
    let mut sum = DVector::zeros(x.nrows());
    for col in x.column_iter() {
        sum += col;
    }
    sum / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    algorithm: Algorithm,
    t: usize,
    x: DMatrix<f64>,
    /// `X_{t−1}`; D² only, zero otherwise.
    x_prev: DMatrix<f64>,
    /// `G(X_{t−1}; ξ_{t−1})`; D² only, zero otherwise.
    g_prev: DMatrix<f64>,
}

impl OptimizerState {
    /// All workers start at the origin.
    pub fn new(algorithm: Algorithm, dim: usize, n: usize) -> Self {
        Self {
            algorithm,
            t: 0,
            x: DMatrix::zeros(dim, n),
            x_prev: DMatrix::zeros(dim, n),
            g_prev: DMatrix::zeros(dim, n),
        }
    }

    /// Starts from an arbitrary model matrix at `t = 0`.
    pub fn from_models(algorithm: Algorithm, x: DMatrix<f64>) -> Self {
        let (dim, n) = x.shape();
        Self {
            algorithm,
            t: 0,
            x,
            x_prev: DMatrix::zeros(dim, n),
            g_prev: DMatrix::zeros(dim, n),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn models(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn prev_models(&self) -> &DMatrix<f64> {
        &self.x_prev
    }

    pub fn prev_gradients(&self) -> &DMatrix<f64> {
        &self.g_prev
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn worker(&self, i: usize) -> DVector<f64> {
        self.x.column(i).clone_owned()
    }

    /// `X̄_t`
    pub fn mean(&self) -> DVector<f64> {
        column_mean(&self.x)
    }
}

fn check_step(state: &OptimizerState, expected: Algorithm, grads: &DMatrix<f64>, gamma: f64) -> Result<()> {
    if state.algorithm != expected {
        return Err(Error::InvalidArgument(format!(
            "{expected} step applied to a {} state",
            state.algorithm
        )));
    }
    if grads.shape() != state.x.shape() {
        return Err(Error::Dimension(format!(
            "gradients are {:?}, models are {:?}",
            grads.shape(),
            state.x.shape()
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn check_mixing(state: &OptimizerState, w: &MixingMatrix) -> Result<()> {
    if w.n() != state.n() {
        return Err(Error::Dimension(format!(
            "mixing matrix covers {} workers, state has {}",
            w.n(),
            state.n()
        )));
    }
    Ok(())
}

/// One D² round:
/// `X_{t+½} = X₀ − γG₀` at `t = 0`, otherwise
/// `X_{t+½} = 2X_t − X_{t−1} − γG_t + γG_{t−1}`; then `X_{t+1} = X_{t+½}W`.
pub fn d2_step(state: &OptimizerState, grads: &DMatrix<f64>, w: &MixingMatrix, gamma: f64) -> Result<OptimizerState> {
    check_step(state, Algorithm::D2, grads, gamma)?;
    check_mixing(state, w)?;
    let half = if state.t == 0 {
        &state.x - grads * gamma
    } else {
        &state.x * 2.0 - &state.x_prev - grads * gamma + &state.g_prev * gamma
    };
    Ok(OptimizerState {
        algorithm: Algorithm::D2,
        t: state.t + 1,
        x: w.gossip(&half)?,
        x_prev: state.x.clone(),
        g_prev: grads.clone(),
    })
}

/// One D-PSGD round: `X_{t+1} = X_t W − γG_t`.
pub fn dpsgd_step(state: &OptimizerState, grads: &DMatrix<f64>, w: &MixingMatrix, gamma: f64) -> Result<OptimizerState> {
    check_step(state, Algorithm::Dpsgd, grads, gamma)?;
    check_mixing(state, w)?;
    let mut next = w.gossip(&state.x)?;
    next -= grads * gamma;
    Ok(OptimizerState {
        algorithm: Algorithm::Dpsgd,
        t: state.t + 1,
        x: next,
        x_prev: DMatrix::zeros(state.dim(), state.n()),
        g_prev: DMatrix::zeros(state.dim(), state.n()),
    })
}

/// One centralized round: `x_{t+1} = x_t − γ·(1/n)Σᵢ gᵢ`, broadcast.
pub fn cpsgd_step(state: &OptimizerState, grads: &DMatrix<f64>, gamma: f64) -> Result<OptimizerState> {
    check_step(state, Algorithm::Cpsgd, grads, gamma)?;
    let x0 = state.x.column(0);
    let spread = state
        .x
        .column_iter()
        .map(|c| (c - x0).amax())
        .fold(0.0f64, f64::max);
    if spread != 0.0 || spread.is_nan() {
        return Err(Error::NotConsensus { spread });
    }
    let mut avg = DVector::zeros(state.dim());
    for g in grads.column_iter() {
        avg += g;
    }
    avg /= state.n() as f64;
    let next = x0 - avg * gamma;
    Ok(OptimizerState {
        algorithm: Algorithm::Cpsgd,
        t: state.t + 1,
        x: DMatrix::from_fn(state.dim(), state.n(), |r, _| next[r]),
        x_prev: DMatrix::zeros(state.dim(), state.n()),
        g_prev: DMatrix::zeros(state.dim(), state.n()),
    })
}

/// Dispatches on the state's algorithm.
pub fn step(state: &OptimizerState, grads: &DMatrix<f64>, w: &MixingMatrix, gamma: f64) -> Result<OptimizerState> {
    match state.algorithm {
        Algorithm::D2 => d2_step(state, grads, w, gamma),
        Algorithm::Dpsgd => dpsgd_step(state, grads, w, gamma),
        Algorithm::Cpsgd => cpsgd_step(state, grads, gamma),
    }
}

/// How each worker forms its per-round gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchMode {
    /// `b` samples drawn with replacement.
    Minibatch(usize),
    /// Exact local gradient over the whole shard (σ = 0).
    Full,
}

impl BatchMode {
    /// `Full` once the batch covers every shard, `Minibatch` otherwise.
    pub fn for_batch_size(problem: &ProblemInstance, batch_size: usize) -> Self {
        if (0..problem.n()).all(|i| batch_size >= problem.shard_len(i)) {
            BatchMode::Full
        } else {
            BatchMode::Minibatch(batch_size)
        }
    }
}

/// Gradients for round `t`, one column per worker evaluated at that
/// worker's column of `x`. Worker `i` draws from the stream keyed by
/// `(root seed, i, t)`, so the draws do not depend on the algorithm.
pub fn sample_gradients(
    problem: &ProblemInstance,
    x: &DMatrix<f64>,
    batch: BatchMode,
    streams: &SampleStreams,
    t: usize,
) -> Result<DMatrix<f64>> {
    if x.ncols() != problem.n() || x.nrows() != problem.dim() {
        return Err(Error::Dimension(format!(
            "models are {:?}, problem is {}x{}",
            x.shape(),
            problem.dim(),
            problem.n()
        )));
    }
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..problem.n() {
        let xi = x.column(i).clone_owned();
        let gi = match batch {
            BatchMode::Full => problem.full_local_gradient(i, &xi)?,
            BatchMode::Minibatch(b) => {
                let mut rng = streams.for_round(i, t);
                problem.stochastic_gradient(i, &xi, b, &mut rng)?.value
            }
        };
        g.set_column(i, &gi);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub iterations: usize,
    pub batch: BatchMode,
    pub seed: u64,
    pub log_every: usize,
}

/// Callbacks fired during [`run`].
pub trait Observer {
    fn on_step(&mut self, _before: &OptimizerState, _grads: &DMatrix<f64>, _after: &OptimizerState) {}
    fn on_record(&mut self, _record: &MetricRecord) {}
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricRecord>,
    pub final_state: OptimizerState,
    /// `(1/n) Σᵢ x_T⁽ⁱ⁾`
    pub output: DVector<f64>,
    pub warnings: Vec<String>,
}

/// Runs `iterations` synchronous rounds from `X₀ = 0`.
///
/// Metrics are recorded at `t = 0`, every `log_every` rounds and at the
/// final round.
pub fn run(
    problem: &ProblemInstance,
    w: &MixingMatrix,
    settings: &RunSettings,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    let RunSettings {
        algorithm,
        gamma,
        iterations,
        batch,
        seed,
        log_every,
    } = *settings;
    if iterations == 0 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    if log_every == 0 {
        return Err(Error::InvalidArgument("log_every must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if w.n() != problem.n() {
        return Err(Error::Dimension(format!(
            "mixing matrix covers {} workers, problem has {}",
            w.n(),
            problem.n()
        )));
    }
    if let BatchMode::Minibatch(b) = batch {
        if b == 0 || (0..problem.n()).any(|i| b > problem.shard_len(i)) {
            return Err(Error::InvalidArgument(format!(
                "batch size {b} must be between 1 and the smallest shard"
            )));
        }
    }
    let mut warnings = Vec::new();
    if algorithm.is_decentralized() {
        w.validate().ensure_valid()?;
    }
    if algorithm == Algorithm::D2 {
        if let Err(Error::StepsizeTooLarge { c3 }) = theory_constants(w, problem.smoothness(), gamma) {
            warnings.push(format!(
                "gamma = {gamma} violates 1 - 24*C2*gamma^2*L^2 > 0 (C3 = {c3}); running outside the analyzed regime"
            ));
        }
    }

    let streams = SampleStreams::new(seed);
    let mut state = OptimizerState::new(algorithm, problem.dim(), problem.n());
    let mut records = Vec::new();
    let mut log = |state: &OptimizerState, observer: &mut dyn Observer| -> Result<()> {
        let r = metrics::evaluate(problem, state, gamma, seed)?;
        observer.on_record(&r);
        records.push(r);
        Ok(())
    };
    log(&state, observer)?;
    for t in 0..iterations {
        let grads = sample_gradients(problem, state.models(), batch, &streams, t)?;
        let next = step(&state, &grads, w, gamma)?;
        observer.on_step(&state, &grads, &next);
        state = next;
        if state.t() % log_every == 0 || state.t() == iterations {
            log(&state, observer)?;
        }
    }
    Ok(RunOutput {
        records,
        output: state.mean(),
        final_state: state,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{MixingScheme, Topology, TopologyKind};
    use crate::problems::gen_least_squares;
    use proptest::prelude::*;

    fn single() -> MixingMatrix {
        MixingMatrix::build(&Topology::build(TopologyKind::Complete, 1).unwrap(), MixingScheme::MeanAll).unwrap()
    }

    fn ring(n: usize) -> MixingMatrix {
        MixingMatrix::build(&Topology::build(TopologyKind::Ring, n).unwrap(), MixingScheme::UniformNeighbor).unwrap()
    }

    fn mean_all(n: usize) -> MixingMatrix {
        MixingMatrix::build(&Topology::build(TopologyKind::Complete, n).unwrap(), MixingScheme::MeanAll).unwrap()
    }

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn d2_scalar_hand_recursion() {
        // f(x) = (x - 1)²/2, ∇f(x) = x - 1
        let w = single();
        let s0 = OptimizerState::new(Algorithm::D2, 1, 1);
        let s1 = d2_step(&s0, &scalar(-1.0), &w, 0.1).unwrap();
        assert!((s1.models()[(0, 0)] - 0.1).abs() < 1e-15);
        let g1 = s1.models()[(0, 0)] - 1.0;
        let s2 = d2_step(&s1, &scalar(g1), &w, 0.1).unwrap();
        assert!((s2.models()[(0, 0)] - 0.19).abs() < 1e-15);
        // one gradient step from x₁
        assert!((s2.models()[(0, 0)] - (0.1 - 0.1 * g1)).abs() < 1e-15);
        assert_eq!(s2.t(), 2);
        assert_eq!(s2.prev_models()[(0, 0)], s1.models()[(0, 0)]);
        assert_eq!(s2.prev_gradients()[(0, 0)], g1);
    }

    #[test]
    fn single_worker_algorithms_coincide() {
        let w = single();
        let mut states: Vec<OptimizerState> =
            Algorithm::ALL.iter().map(|&a| OptimizerState::new(a, 1, 1)).collect();
        for _ in 0..50 {
            let x = states[0].models()[(0, 0)];
            let g = scalar(x - 1.0);
            states = states.iter().map(|s| step(s, &g, &w, 0.1).unwrap()).collect();
            let v: Vec<f64> = states.iter().map(|s| s.models()[(0, 0)]).collect();
            assert!((v[0] - v[1]).abs() < 1e-14 && (v[0] - v[2]).abs() < 1e-14, "{v:?}");
        }
    }

    #[test]
    fn dpsgd_single_worker_is_sgd() {
        let s = OptimizerState::from_models(Algorithm::Dpsgd, scalar(2.0));
        let next = dpsgd_step(&s, &scalar(0.5), &single(), 0.2).unwrap();
        assert_eq!(next.models()[(0, 0)], 2.0 - 0.1);
    }

    #[test]
    fn mean_all_collapses_columns() {
        let w = mean_all(4);
        let s0 = OptimizerState::new(Algorithm::D2, 3, 4);
        let g = DMatrix::from_fn(3, 4, |r, c| (r as f64 + 1.0) * (c as f64 - 1.5));
        let s1 = d2_step(&s0, &g, &w, 0.3).unwrap();
        let c0 = s1.models().column(0).clone_owned();
        for c in s1.models().column_iter() {
            assert!((c - &c0).amax() < 1e-15);
        }
    }

    #[test]
    fn cpsgd_zero_gradient_fixed_point() {
        let s = OptimizerState::from_models(Algorithm::Cpsgd, DMatrix::from_element(2, 3, 0.7));
        let next = cpsgd_step(&s, &DMatrix::zeros(2, 3), 0.5).unwrap();
        assert_eq!(next.models(), s.models());
        assert_eq!(next.t(), 1);
    }

    #[test]
    fn cpsgd_requires_consensus() {
        let x = DMatrix::from_fn(2, 3, |r, c| (r + c) as f64);
        let s = OptimizerState::from_models(Algorithm::Cpsgd, x);
        assert!(matches!(
            cpsgd_step(&s, &DMatrix::zeros(2, 3), 0.1),
            Err(Error::NotConsensus { .. })
        ));
    }

    #[test]
    fn step_errors() {
        let w = ring(5);
        let s = OptimizerState::new(Algorithm::D2, 2, 5);
        assert!(d2_step(&s, &DMatrix::zeros(2, 4), &w, 0.1).is_err());
        assert!(d2_step(&s, &DMatrix::zeros(2, 5), &w, 0.0).is_err());
        assert!(d2_step(&s, &DMatrix::zeros(2, 5), &ring(6), 0.1).is_err());
        assert!(dpsgd_step(&s, &DMatrix::zeros(2, 5), &w, 0.1).is_err());
    }

    #[test]
    fn column_mean_exact_on_consensus() {
        let x = DMatrix::from_element(2, 3, 0.1);
        assert_eq!(column_mean(&x), DVector::from_element(2, 0.1));
    }

    #[test]
    fn run_single_iteration() {
        let p = gen_least_squares(5, 3, 6, 0.5, 0.1, 1).unwrap();
        let w = ring(5);
        for algorithm in Algorithm::ALL {
            let out = run(
                &p,
                &w,
                &RunSettings {
                    algorithm,
                    gamma: 0.05,
                    iterations: 1,
                    batch: BatchMode::Minibatch(2),
                    seed: 3,
                    log_every: 1,
                },
                &mut (),
            )
            .unwrap();
            assert_eq!(out.final_state.t(), 1);
            assert_eq!(out.records.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0, 1]);
        }
    }

    #[test]
    fn run_rejects_invalid_mixing_for_decentralized() {
        let p = gen_least_squares(4, 2, 3, 0.5, 0.1, 1).unwrap();
        let bad = MixingMatrix::uniform_neighbor_with_self_weight(&Topology::build(TopologyKind::Ring, 4).unwrap(), 0.0).unwrap();
        let mut settings = RunSettings {
            algorithm: Algorithm::D2,
            gamma: 0.05,
            iterations: 3,
            batch: BatchMode::Full,
            seed: 0,
            log_every: 1,
        };
        assert!(matches!(run(&p, &bad, &settings, &mut ()), Err(Error::ValidationFailed(_))));
        settings.algorithm = Algorithm::Cpsgd;
        assert!(run(&p, &bad, &settings, &mut ()).is_ok());
    }

    #[test]
    fn oversized_gamma_warns_but_runs() {
        let p = gen_least_squares(5, 2, 4, 0.5, 0.0, 1).unwrap();
        let out = run(
            &p,
            &ring(5),
            &RunSettings {
                algorithm: Algorithm::D2,
                gamma: 0.5 / p.smoothness(),
                iterations: 5,
                batch: BatchMode::Full,
                seed: 0,
                log_every: 1,
            },
            &mut (),
        )
        .unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.final_state.t(), 5);
    }

    #[test]
    fn log_interval_includes_last_round() {
        let p = gen_least_squares(5, 2, 4, 0.5, 0.0, 1).unwrap();
        let out = run(
            &p,
            &ring(5),
            &RunSettings {
                algorithm: Algorithm::Dpsgd,
                gamma: 0.01,
                iterations: 10,
                batch: BatchMode::Full,
                seed: 0,
                log_every: 4,
            },
            &mut (),
        )
        .unwrap();
        assert_eq!(out.records.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0, 4, 8, 10]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mean_evolution_is_sgd(seed in any::<u64>(), gamma in 0.001f64..0.2, steps in 1usize..30) {
            let w = ring(5);
            let streams = SampleStreams::new(seed);
            let p = gen_least_squares(5, 3, 6, 1.0, 0.5, seed).unwrap();
            for algorithm in [Algorithm::D2, Algorithm::Dpsgd] {
                let mut s = OptimizerState::new(algorithm, 3, 5);
                for t in 0..steps {
                    let g = sample_gradients(&p, s.models(), BatchMode::Minibatch(2), &streams, t).unwrap();
                    let next = step(&s, &g, &w, gamma).unwrap();
                    let before = s.mean();
                    let lhs = next.mean() - &before + column_mean(&g) * gamma;
                    prop_assert!(lhs.norm() <= 1e-12 * (1.0 + before.norm()));
                    s = next;
                }
            }
        }

        #[test]
        fn steps_leave_input_untouched(seed in any::<u64>()) {
            let w = ring(5);
            let p = gen_least_squares(5, 2, 4, 1.0, 0.5, seed).unwrap();
            let streams = SampleStreams::new(seed);
            let mut s = OptimizerState::new(Algorithm::D2, 2, 5);
            for t in 0..3 {
                let g = sample_gradients(&p, s.models(), BatchMode::Minibatch(1), &streams, t).unwrap();
                let snapshot = s.clone();
                let next = d2_step(&s, &g, &w, 0.05).unwrap();
                prop_assert_eq!(&s, &snapshot);
                s = next;
            }
        }
    }
}
