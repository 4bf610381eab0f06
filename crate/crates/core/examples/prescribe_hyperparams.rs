//! Plug-in (gamma', s, gamma) from a spectral estimate, then a check that
//! the Bayes direction satisfies the resulting unlabeled constraint.

use robust_selftrain::gmm::{self, GmmSpec};
use robust_selftrain::hyperparams::{estimate_spectrum, prescribe_isotropic};
use robust_selftrain::models::{LinearParams, Model};
use robust_selftrain::trainer::constrained_view_check;

fn main() -> robust_selftrain::Result<()> {
    let (m, n, d) = (10, 10_000, 200);
    let spec = GmmSpec::isotropic_random_mean(d, 1.0, 1.0, 4)?;
    let unlabeled = gmm::sample_unlabeled(&spec, n, 9)?;
    let est = estimate_spectrum(&unlabeled, 500)?;
    println!("lambda_max_hat {:.4}  trace_hat {:.2}", est.lambda_max_hat, est.trace_hat);

    let p = prescribe_isotropic(&est, m, n, d, 0.05, 0.0, 1.0)?;
    println!("gamma' {:.5}  s {:.5}  gamma {:.5}  feasible {}", p.gamma_prime, p.s, p.gamma, p.feasible);
    if let Some(w) = &p.warning {
        println!("warning: {w}");
    }
    println!("{}", p.lambda_note);

    let theta = Model::Linear(LinearParams::new(spec.bayes_direction()?, None, true)?);
    println!("Bayes direction admitted: {}", constrained_view_check(&theta, &unlabeled, p.gamma_prime, p.s)?);
    Ok(())
}
