//! Seeded Monte-Carlo checks of sampler, trainer and bound behaviour.

use robust_selftrain::bounds::{thm2_residual, BoundInputs};
use robust_selftrain::experiments::{replay, run_scenario, Method, Scenario};
use robust_selftrain::gmm::{self, GmmSpec};
use robust_selftrain::hyperparams::{estimate_spectrum, prescribe_isotropic};
use robust_selftrain::linalg;
use robust_selftrain::losses::{RobustConfig, Surrogate};
use robust_selftrain::models::LossKind;
use robust_selftrain::optim::OptimizerKind;
use robust_selftrain::trainer::{rss_objective, train_erm, train_erm_with, train_rss, train_rss_with, TrainOptions};
use robust_selftrain::TrainConfig;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn empirical_risk_within_hoeffding_envelope() {
    let n = 10_000;
    let tol = 3.0 * (0.25 / n as f64).sqrt();
    let mut ok = 0;
    for s in 0..100u64 {
        let spec = if s % 2 == 0 {
            GmmSpec::isotropic_random_mean(8, 1.0, 1.0, s).unwrap()
        } else {
            let eig: Vec<f64> = (0..8).map(|i| 0.5 + 0.25 * i as f64).collect();
            GmmSpec::general_from_eigenvalues(gmm::random_unit_vector(8, s).unwrap(), &eig, s + 1).unwrap()
        };
        let theta = gmm::random_unit_vector(8, s + 1000).unwrap();
        let sample = gmm::sample_labeled(&spec, n, s + 2000).unwrap();
        let gap = (gmm::empirical_risk(&theta, &sample) - gmm::analytic_risk(&theta, &spec).unwrap()).abs();
        ok += usize::from(gap <= tol);
    }
    assert!(ok >= 99, "{ok}/100 within envelope");
}

#[test]
fn labeled_sampler_is_balanced() {
    let m = 2000;
    let tol = 3.0 * (0.25 / m as f64).sqrt();
    let spec = GmmSpec::isotropic_random_mean(4, 1.0, 1.0, 0).unwrap();
    let mut ok = 0;
    for s in 0..100 {
        let set = gmm::sample_labeled(&spec, m, s).unwrap();
        let pos = set.labels().iter().filter(|&&y| y > 0.0).count() as f64 / m as f64;
        ok += usize::from((pos - 0.5).abs() <= tol);
    }
    assert!(ok >= 99, "{ok}/100 balanced");
}

#[test]
fn mixture_second_moment_top_eigenvalue() {
    // 1/2 N(+mu, s^2 I) + 1/2 N(-mu, s^2 I): top eigenvalue |mu|^2 + s^2
    let spec = GmmSpec::isotropic_random_mean(5, 1.5, 0.8, 3).unwrap();
    let u = gmm::sample_unlabeled(&spec, 200_000, 4).unwrap();
    let est = estimate_spectrum(&u, 1000).unwrap();
    assert!((est.lambda_max_hat - (2.25 + 0.64)).abs() < 0.05, "{}", est.lambda_max_hat);
}

fn small_cfg(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs: 40,
        learning_rate: 1e-2,
        seed,
        ..Default::default()
    };
    cfg.robust.gamma = 1.0;
    cfg.robust.gamma_prime = 0.1;
    cfg.robust.lambda = 1.0;
    cfg
}

#[test]
fn objective_decreases_over_training() {
    let mut ok = 0;
    for s in 0..100u64 {
        let spec = GmmSpec::isotropic_random_mean(5, 2.0, 1.0, s).unwrap();
        let l = gmm::sample_labeled(&spec, 20, s + 1).unwrap();
        let u = gmm::sample_unlabeled(&spec, 100, s + 2).unwrap();
        let r = train_rss(&l, &u, &small_cfg(s)).unwrap();
        let first = r.epochs.first().unwrap().total;
        let last = r.epochs.last().unwrap().total;
        ok += usize::from(last <= first);
    }
    assert!(ok >= 99, "{ok}/100 seeds decreased");
}

#[test]
fn vanishing_lambda_recovers_erm() {
    for opt in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        for s in 0..10u64 {
            let spec = GmmSpec::isotropic_random_mean(6, 1.0, 1.0, s).unwrap();
            let l = gmm::sample_labeled(&spec, 16, s + 1).unwrap();
            let u = gmm::sample_unlabeled(&spec, 64, s + 2).unwrap();
            let mut cfg = small_cfg(s);
            cfg.optimizer = opt;
            cfg.learning_rate = 0.05;
            cfg.robust.gamma = 0.2;
            cfg.robust.lambda = 1e-8;
            let rss = train_rss(&l, &u, &cfg).unwrap();
            let erm = train_erm(&l, &cfg).unwrap();
            let dist = linalg::distance(rss.model.params(), erm.model.params());
            assert!(dist <= 1e-3, "{opt:?} seed {s}: distance {dist}");
        }
    }
}

#[test]
fn self_label_term_matches_objective() {
    let spec = GmmSpec::isotropic_random_mean(4, 1.0, 1.0, 9).unwrap();
    let l = gmm::sample_labeled(&spec, 12, 1).unwrap();
    let u = gmm::sample_unlabeled(&spec, 40, 2).unwrap();
    for surrogate in [Surrogate::ClosedForm, Surrogate::Numeric { base: LossKind::CrossEntropy }] {
        let mut cfg = small_cfg(3);
        cfg.epochs = 1;
        cfg.batches = 1;
        cfg.robust.surrogate = surrogate;
        // a zero step size keeps the adversary at the data point
        cfg.robust.inner.alpha = 0.0;
        let init = cfg.model.build(4, 0).unwrap();
        let r = train_rss_with(&l, &u, &cfg, TrainOptions { initial: Some(&init), ..Default::default() }).unwrap();
        let obj = rss_objective(&init, &l, &u, &cfg.robust).unwrap();
        let e = r.epochs[0];
        assert!((e.unlabeled - obj.unlabeled).abs() < 1e-12, "{surrogate:?}: {} vs {}", e.unlabeled, obj.unlabeled);
        assert!((e.labeled - obj.labeled).abs() < 1e-12);
    }
}

#[test]
fn direction_recovery_improves_with_unlabeled_data() {
    let d = 200;
    let sizes = [10usize, 100, 1000, 10_000];
    let mut cos: Vec<Vec<f64>> = vec![Vec::new(); sizes.len()];
    for s in 0..20u64 {
        let spec = GmmSpec::isotropic_random_mean(d, 1.0, 1.0, s).unwrap();
        let l = gmm::sample_labeled(&spec, 10, s + 100).unwrap();
        let pool = gmm::sample_unlabeled(&spec, 10_000, s + 200).unwrap();
        let mut cfg = TrainConfig {
            learning_rate: 1e-2,
            seed: s,
            ..Default::default()
        };
        cfg.robust = RobustConfig {
            gamma: 1.0,
            gamma_prime: 1e-3,
            lambda: 10.0,
            ..Default::default()
        };
        let erm = train_erm_with(&l, &cfg, TrainOptions::default()).unwrap();
        let mu = linalg::normalized(spec.mu0()).unwrap();
        for (k, &n) in sizes.iter().enumerate() {
            let u = pool.take(n);
            let r = train_rss_with(&l, &u, &cfg, TrainOptions { initial: Some(&erm.model), ..Default::default() }).unwrap();
            let w = r.model.as_linear().unwrap().w().to_vec();
            cos[k].push(linalg::dot(&w, &mu) / linalg::norm(&w));
        }
    }
    let med: Vec<f64> = cos.into_iter().map(median).collect();
    for w in med.windows(2) {
        assert!(w[1] >= w[0], "median cosines {med:?}");
    }
}

#[test]
fn excess_risk_below_theorem_two() {
    let (d, m, n) = (50, 50, 5000);
    let mut ok = 0;
    for s in 0..50u64 {
        let spec = GmmSpec::isotropic_random_mean(d, 1.0, 1.0, s).unwrap();
        let l = gmm::sample_labeled(&spec, m, s + 1).unwrap();
        let u = gmm::sample_unlabeled(&spec, n, s + 2).unwrap();
        let est = estimate_spectrum(&u, 500).unwrap();
        let p = prescribe_isotropic(&est, m, n, d, 0.05, 0.0, 1.0).unwrap();
        let mut cfg = small_cfg(s);
        cfg.epochs = 50;
        cfg.robust.gamma = p.gamma;
        cfg.robust.gamma_prime = p.gamma_prime;
        cfg.robust.lambda = 1.0;
        let r = train_rss(&l, &u, &cfg).unwrap();
        let w = r.model.as_linear().unwrap().w().to_vec();
        let excess = gmm::analytic_risk(&w, &spec).unwrap() - gmm::analytic_risk(&spec.bayes_direction().unwrap(), &spec).unwrap();
        let bound = thm2_residual(&BoundInputs::from_spec(&spec, m, n, 0.05, p.gamma)).unwrap().residual;
        ok += usize::from(excess <= bound + 0.01);
    }
    assert!(ok >= 45, "{ok}/50 within bound");
}

fn tiny_scenario() -> Scenario {
    Scenario {
        id: "tiny".into(),
        d: 8,
        mu0_norm: 2.0,
        labeled_sizes: vec![6, 24],
        unlabeled_sizes: vec![50, 200],
        test_size: 500,
        trials: 3,
        epochs: 5,
        seeds: vec![0, 1],
        ..Default::default()
    }
}

#[test]
fn scenario_rows_replay_from_logged_exponents() {
    let cfg = tiny_scenario();
    let out = run_scenario(&cfg).unwrap();
    assert!(out.all_succeeded());
    for r in out.runs.iter().filter(|r| r.method == Method::Rss) {
        let erm = out
            .runs
            .iter()
            .find(|e| e.method == Method::Erm && e.seed == r.seed && e.m == r.m)
            .unwrap();
        assert_eq!(replay(&cfg, r.seed, r.m, &erm.exponents, None).unwrap(), erm.test_accuracy);
        let acc = replay(&cfg, r.seed, r.m, &erm.exponents, Some((r.n, &r.exponents))).unwrap();
        assert_eq!(acc, r.test_accuracy, "seed {} m {} n {}", r.seed, r.m, r.n);
    }
}

#[test]
fn scenario_output_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let cfg = Scenario {
            output_dir: Some(dir.path().to_path_buf()),
            ..tiny_scenario()
        };
        run_scenario(&cfg).unwrap();
    }
    for f in ["results.csv", "runs.csv", "failures.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
