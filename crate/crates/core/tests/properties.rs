use proptest::prelude::*;

use robust_selftrain::bounds::{thm1_residual, thm2_residual, thm3_residual, BoundInputs};
use robust_selftrain::gmm::{self, Covariance, FullCovariance, GmmSpec};
use robust_selftrain::hyperparams::{random_search, SearchSpace};
use robust_selftrain::inner::{adversarial_perturb, adversarial_perturb_traced, grid_oracle, FnLoss, InnerSolverConfig, ZeroOneLoss};
use robust_selftrain::linalg;
use robust_selftrain::losses::{phi_labeled_closed, phi_numeric, phi_unlabeled_closed, CostKind};
use robust_selftrain::models::{LinearParams, LossKind, Model, ModelSpec};
use robust_selftrain::{LabelSchema, LabeledSet, UnlabeledSet};

fn unit(v: Vec<f64>) -> Vec<f64> {
    linalg::normalized(&v).unwrap_or_else(|_| {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        e
    })
}

fn vec_in(d: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, d)
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    prop_oneof![Just(2usize), Just(10usize)].prop_flat_map(|d| (vec_in(d, 1.0), vec_in(d, 3.0), prop_oneof![Just(1.0), Just(-1.0)]))
}

fn zero_one(theta: &[f64], x: &[f64], y: f64) -> f64 {
    if y * linalg::dot(theta, x) <= 0.0 {
        1.0
    } else {
        0.0
    }
}

fn self_label(theta: &[f64], x: &[f64]) -> f64 {
    if linalg::dot(theta, x) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

proptest! {
    #[test]
    fn closed_forms_in_unit_range((t, x, y) in instance(), g in 1e-3f64..1e3, gp in 1e-3f64..1e3) {
        let theta = unit(t);
        let a = phi_labeled_closed(&theta, &x, y, g).unwrap();
        let b = phi_unlabeled_closed(&theta, &x, gp).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn robust_loss_nonincreasing_in_gamma((t, x, y) in instance(), g in 1e-3f64..1e2, factor in 1.0f64..10.0) {
        let theta = unit(t);
        prop_assert!(phi_labeled_closed(&theta, &x, y, g * factor).unwrap() <= phi_labeled_closed(&theta, &x, y, g).unwrap());
        prop_assert!(phi_unlabeled_closed(&theta, &x, g * factor).unwrap() <= phi_unlabeled_closed(&theta, &x, g).unwrap());
    }

    #[test]
    fn robust_loss_dominates_plain_loss((t, x, y) in instance(), g in 1e-2f64..1e2) {
        let theta = unit(t);
        let l = zero_one(&theta, &x, y);
        prop_assert!(phi_labeled_closed(&theta, &x, y, g).unwrap() >= l);
        let ys = self_label(&theta, &x);
        prop_assert!(phi_unlabeled_closed(&theta, &x, g).unwrap() >= zero_one(&theta, &x, ys));
        let loss = ZeroOneLoss { theta: theta.clone() };
        let (v, _) = phi_numeric(&loss, &x, y, g, CostKind::L2, &InnerSolverConfig::default()).unwrap();
        prop_assert!(v >= l);
    }

    #[test]
    fn closed_form_matches_numeric_path((t, x, y) in instance(), g in 1e-2f64..0.25, gp in 1e-2f64..0.25) {
        let theta = unit(t);
        let loss = ZeroOneLoss { theta: theta.clone() };
        let cfg = InnerSolverConfig::default();
        let (v, _) = phi_numeric(&loss, &x, y, g, CostKind::L2, &cfg).unwrap();
        prop_assert!((v - phi_labeled_closed(&theta, &x, y, g).unwrap()).abs() <= 1e-4);
        let ys = self_label(&theta, &x);
        let (v, _) = phi_numeric(&loss, &x, ys, gp, CostKind::L2Squared, &cfg).unwrap();
        prop_assert!((v - phi_unlabeled_closed(&theta, &x, gp).unwrap()).abs() <= 1e-4);
    }

    #[test]
    fn linear_prediction_is_scale_invariant(w in vec_in(6, 2.0), x in vec_in(6, 3.0), c in 1e-3f64..1e3) {
        prop_assume!(linalg::norm(&w) > 1e-6);
        let a = Model::Linear(LinearParams::new(w.clone(), None, false).unwrap());
        let b = Model::Linear(LinearParams::new(w.iter().map(|v| v * c).collect(), None, false).unwrap());
        prop_assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }

    #[test]
    fn ascent_trace_nondecreasing_on_concave_problems(t in vec_in(4, 1.0), x in vec_in(4, 3.0), y in prop_oneof![Just(1.0), Just(-1.0)], g in 0.5f64..5.0, c in -1.0f64..1.0) {
        let theta = unit(t);
        let th = theta.clone();
        let th2 = theta.clone();
        // concave quadratic in the margin plus a linear term
        let loss = FnLoss {
            dim: 4,
            value: move |z: &[f64], y: f64| -y * linalg::dot(&th, z) - (linalg::dot(&th, z) - c).powi(2),
            grad: move |z: &[f64], y: f64| {
                let s = -y - 2.0 * (linalg::dot(&th2, z) - c);
                th2.iter().map(|v| s * v).collect()
            },
            direction: Some(theta.clone()),
        };
        let (_, trace) = adversarial_perturb_traced(&loss, &x, y, g, CostKind::L2Squared, &InnerSolverConfig::default()).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "trace decreased: {:?}", trace);
        }
        let p = adversarial_perturb(&loss, &x, y, g, CostKind::L2Squared, &InnerSolverConfig::default()).unwrap();
        let (best, _) = grid_oracle(&loss, &x, y, g, CostKind::L2Squared, 10.0, 1e-4).unwrap();
        prop_assert!(best >= p.objective - 1e-6);
    }

    #[test]
    fn shifted_spec_keeps_covariance(d in 2usize..8, alpha in 0.0f64..1.0, seed in any::<u64>(), sigma in 0.5f64..2.0) {
        let base = GmmSpec::isotropic_random_mean(d, 2.0, sigma, seed).unwrap();
        let s = gmm::make_shifted_spec(&base, alpha, seed ^ 1).unwrap();
        prop_assert_eq!(s.cov1(), base.cov0());
        prop_assert!((linalg::distance(s.mu1(), base.mu0()) - alpha).abs() < 1e-12);
        let eig: Vec<f64> = (0..d).map(|i| 1.0 + i as f64).collect();
        let general = GmmSpec::new(base.mu0().to_vec(), Covariance::Full(FullCovariance::from_diagonal(&eig).unwrap()), base.mu0().to_vec(), Covariance::Full(FullCovariance::from_diagonal(&eig).unwrap()), 0.0).unwrap();
        let s = gmm::make_shifted_spec(&general, alpha, seed).unwrap();
        prop_assert_eq!(s.cov1(), general.cov0());
    }

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec((vec_in(3, 1e6), any::<bool>()), 1..20)) {
        let feats: Vec<Vec<f64>> = rows.iter().map(|(f, _)| f.clone()).collect();
        let labels: Vec<f64> = rows.iter().map(|(_, b)| if *b { 1.0 } else { -1.0 }).collect();
        let set = LabeledSet::new(robust_selftrain::linalg::Matrix::from_rows(&feats).unwrap(), labels).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = LabeledSet::read_csv(buf.as_slice(), &LabelSchema::default()).unwrap();
        prop_assert_eq!(&back, &set);
        let u = set.to_unlabeled();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        prop_assert_eq!(UnlabeledSet::read_csv(buf.as_slice()).unwrap(), u);
    }

    #[test]
    fn bound_residuals_monotone(m in 1usize..5000, n in 1usize..100_000, dn in 1usize..100_000, d in 1usize..500, a in 0.0f64..2.0, da in 0.0f64..1.0, g in 0.01f64..10.0) {
        let base = BoundInputs::isotropic(m, n, d, a, 0.05, g, 1.0, 1.0, 1.2, 0.8);
        let more_n = BoundInputs { n: n + dn, ..base.clone() };
        let more_a = BoundInputs { alpha: a + da, ..base.clone() };
        for f in [thm1_residual, thm2_residual] {
            let r = f(&base).unwrap().residual;
            prop_assert!(f(&more_n).unwrap().residual <= r + 1e-12 * r.abs());
            prop_assert!(f(&more_a).unwrap().residual >= r - 1e-12 * r.abs());
        }
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = linalg::norm(a).max(linalg::norm(b)).max(1e-6);
    diff / scale
}

fn fd_check(model: &Model, x: &[f64], y: f64, kind: LossKind) -> (f64, f64) {
    let h = 1e-6;
    let g = model.loss_and_grad(x, y, kind).unwrap();
    let mut fd_p = Vec::new();
    let mut m = model.clone();
    for i in 0..m.params().len() {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + h;
        let up = m.loss(x, y, kind).unwrap();
        m.params_mut()[i] = orig - h;
        let down = m.loss(x, y, kind).unwrap();
        m.params_mut()[i] = orig;
        fd_p.push((up - down) / (2.0 * h));
    }
    let mut fd_x = Vec::new();
    let mut z = x.to_vec();
    for i in 0..z.len() {
        let orig = z[i];
        z[i] = orig + h;
        let up = model.loss(&z, y, kind).unwrap();
        z[i] = orig - h;
        let down = model.loss(&z, y, kind).unwrap();
        z[i] = orig;
        fd_x.push((up - down) / (2.0 * h));
    }
    (rel_err(&g.param_grad, &fd_p), rel_err(&g.input_grad, &fd_x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), x in vec_in(5, 2.0), y in prop_oneof![Just(1.0), Just(-1.0)], g in 0.1f64..3.0, kind_ix in 0usize..3, mlp in any::<bool>()) {
        let spec = if mlp {
            ModelSpec::Mlp { hidden: vec![8, 6], leaky_slope: 0.05 }
        } else {
            ModelSpec::Linear { bias: true, normalize: false }
        };
        let mut model = spec.build(5, seed).unwrap();
        if !mlp {
            // move away from the e1 initialisation
            for (i, p) in model.params_mut().iter_mut().enumerate() {
                *p += 0.3 * ((seed.wrapping_add(i as u64) % 7) as f64 - 3.0);
            }
        }
        let kind = [LossKind::Hinge01 { gamma: g }, LossKind::SquaredMargin { gamma: g }, LossKind::CrossEntropy][kind_ix];
        // skip points within reach of a kink of the piecewise losses
        let f = model.margin(&x).unwrap();
        let near_kink = match kind {
            LossKind::Hinge01 { gamma } => (y * f).abs() < 1e-3 || (1.0 - gamma * y * f).abs() < 1e-3,
            LossKind::SquaredMargin { gamma } => (1.0 - gamma * f * f).abs() < 1e-3,
            LossKind::CrossEntropy => false,
        };
        prop_assume!(!near_kink);
        let (ep, ex) = fd_check(&model, &x, y, kind);
        prop_assert!(ep <= 1e-4, "param rel err {ep}");
        prop_assert!(ex <= 1e-4, "input rel err {ex}");
    }

    #[test]
    fn random_search_is_reproducible(seed in any::<u64>(), trials in 1usize..20) {
        let f = |h: &robust_selftrain::hyperparams::Hyper| Ok::<f64, String>(-(h.learning_rate.log10() + 2.0).abs() - h.lambda.log10().abs());
        let a = random_search(&SearchSpace::default(), trials, f, seed).unwrap();
        let b = random_search(&SearchSpace::default(), trials, f, seed).unwrap();
        prop_assert_eq!(a.best, b.best);
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        a.write_log(&mut la).unwrap();
        b.write_log(&mut lb).unwrap();
        prop_assert_eq!(la, lb);
    }
}

#[test]
fn thm3_monotone_on_random_grid() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let d = rng.random_range(2..6);
        let eig: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 + rng.random_range(0.0..0.5)).collect();
        let cov = Covariance::Full(FullCovariance::from_diagonal(&eig).unwrap());
        let mut base = BoundInputs::isotropic(rng.random_range(1..1000), rng.random_range(1..10_000), d, rng.random_range(0.0..1.0), 0.05, 1.0, 1.0, 1.0, 1.0, 1.0);
        base.cov0 = cov.clone();
        base.cov1 = cov;
        let r = thm3_residual(&base).unwrap().residual;
        let more_n = BoundInputs { n: base.n * 2, ..base.clone() };
        let more_a = BoundInputs { alpha: base.alpha + 0.3, ..base.clone() };
        assert!(thm3_residual(&more_n).unwrap().residual <= r * (1.0 + 1e-12));
        assert!(thm3_residual(&more_a).unwrap().residual >= r * (1.0 - 1e-12));
    }
}
