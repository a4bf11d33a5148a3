use d2sim::harness::{
    compare_report, csv_string, parse_csv, preset, run_experiment, AlgorithmChoice, Experiment, ExperimentConfig, Gamma,
};
use d2sim::mixing::{recommended_stepsize, SpectralConstants};
use d2sim::optimizers::{Algorithm, BatchMode};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

const MEAN_ALL: &str = r#"{
    "algorithm": "all",
    "topology": {"kind": "complete", "n": 6},
    "mixing_scheme": "mean-all",
    "problem": {"kind": "least-squares", "dim": 4, "samples_per_worker": 10,
                "heterogeneity": 0.0, "noise": 0.0},
    "gamma": 0.05, "T": 100, "batch_size": 10, "seed": 4
}"#;

#[test]
fn mean_all_without_variance_gives_identical_losses() {
    // with heterogeneity 0 every local minimizer sits at the origin, so all
    // three runs stay at X₀; the collapse with data is checked below
    let t = run_experiment(&config(MEAN_ALL)).unwrap();
    assert_eq!(t.len(), 3);
    for (a, b) in t[0].records.iter().zip(&t[1].records).chain(t[0].records.iter().zip(&t[2].records)) {
        assert!((a.loss_mean_model - b.loss_mean_model).abs() <= 1e-10);
    }
}

#[test]
fn mean_all_collapses_d2_onto_centralized() {
    // heterogeneous and stochastic: D² with W = 11ᵀ/n is still C-PSGD
    let mut c = config(MEAN_ALL);
    c.problem.heterogeneity = Some(1.5);
    c.problem.noise = Some(0.5);
    c.batch_size = 3;
    let t = run_experiment(&c).unwrap();
    for (a, b) in t[0].records.iter().zip(&t[2].records) {
        let scale = 1.0 + b.loss_mean_model.abs();
        assert!((a.loss_mean_model - b.loss_mean_model).abs() <= 1e-10 * scale);
        assert!(a.consensus_err <= 1e-20);
    }
    // D-PSGD gossips before the gradient step, so its models drift apart
    assert!(t[1].records.last().unwrap().consensus_err > 1e-8);
}

#[test]
fn same_config_gives_identical_csv() {
    let c = preset("shuffled-ring").unwrap();
    let mut c = c;
    c.iterations = 200;
    let a = csv_string(&run_experiment(&c).unwrap());
    let b = csv_string(&run_experiment(&c).unwrap());
    assert_eq!(a, b);
}

#[test]
fn csv_parses_back_to_records() {
    let t = run_experiment(&config(MEAN_ALL)).unwrap();
    let parsed = parse_csv(&csv_string(&t)).unwrap();
    let all: Vec<_> = t.iter().flat_map(|t| t.records.clone()).collect();
    assert_eq!(parsed, all);
}

#[test]
fn records_start_at_origin_and_increase() {
    for t in run_experiment(&config(MEAN_ALL)).unwrap() {
        assert_eq!(t.records[0].t, 0);
        assert_eq!(t.records[0].consensus_err, 0.0);
        assert!(t.records.windows(2).all(|w| w[0].t < w[1].t));
    }
}

#[test]
fn auto_gamma_resolves_to_recommended_stepsize() {
    let mut c = preset("unshuffled-ring").unwrap();
    c.gamma = Gamma::Auto;
    c.batch_size = 4;
    let e = Experiment::prepare(&c).unwrap();
    assert_eq!(e.batch, BatchMode::Minibatch(4));
    let sc = SpectralConstants::of(&e.mixing).unwrap();
    let want = recommended_stepsize(sc.c1, sc.c2, e.problem.smoothness(), e.variances.sigma_sq.sqrt(), 2000, 5).unwrap();
    assert_eq!(e.gamma, want);
    let k = e.constants.unwrap();
    assert!(k.c2 * (k.gamma * k.l).powi(2) <= 1.0 / 64.0);
    assert!(k.c3 >= 0.5);
}

#[test]
fn unshuffled_preset_separates_d2_from_dpsgd() {
    let t = run_experiment(&preset("unshuffled-ring").unwrap()).unwrap();
    let last = |k: usize| t[k].records.last().unwrap().grad_norm_sq_mean_model;
    assert_eq!((t[0].algorithm, t[1].algorithm), (Algorithm::D2, Algorithm::Dpsgd));
    assert_eq!(t[0].gamma, t[1].gamma);
    assert!(last(0) <= 0.1 * last(1), "d2 {} vs dpsgd {}", last(0), last(1));
}

#[test]
fn shuffled_preset_losses_match() {
    let t = run_experiment(&preset("shuffled-ring").unwrap()).unwrap();
    let report = compare_report(&t).unwrap();
    let cpsgd = report.entries.iter().find(|e| e.algorithm == Algorithm::Cpsgd).unwrap();
    // ratios are relative to d2, so the d2/cpsgd loss gap is 1/loss_ratio
    assert!((0.5..=2.0).contains(&cpsgd.loss_ratio), "{}", report.to_text());
}

#[test]
fn shuffling_lowers_heterogeneity() {
    let z = |name: &str| Experiment::prepare(&preset(name).unwrap()).unwrap().variances.zeta0;
    assert!(z("shuffled-ring") < z("unshuffled-ring"));
}

#[test]
fn single_algorithm_config() {
    let mut c = config(MEAN_ALL);
    c.algorithm = AlgorithmChoice::One(Algorithm::Dpsgd);
    let t = run_experiment(&c).unwrap();
    assert_eq!(t.len(), 1);
    assert!(compare_report(&t).is_err());
}
