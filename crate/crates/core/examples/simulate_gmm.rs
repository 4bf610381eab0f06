//! Draw from a symmetric two-component mixture, compare the empirical error
//! of the Bayes direction with its closed-form risk, then shift the mean.

use robust_selftrain::gmm::{self, empirical_risk, GmmSpec};

fn main() -> robust_selftrain::Result<()> {
    let spec = GmmSpec::isotropic_random_mean(50, 1.5, 1.0, 7)?;
    let theta = spec.bayes_direction()?;
    let test = gmm::sample_labeled(&spec, 100_000, 1)?;
    println!("analytic risk   {:.4}", gmm::analytic_risk(&theta, &spec)?);
    println!("empirical risk  {:.4}", empirical_risk(&theta, &test));

    let shifted = gmm::make_shifted_spec(&spec, 0.5, 3)?;
    let u = gmm::sample_unlabeled(&shifted, 5, 2)?;
    println!("shift alpha     {}", shifted.alpha());
    println!("first unlabeled row, first 4 dims: {:?}", &u.row(0)[..4]);

    // anisotropic mixture with a fixed spectrum and random basis
    let eig: Vec<f64> = (1..=50).map(|i| 0.5 + i as f64 / 50.0).collect();
    let mut mu0 = vec![0.0; 50];
    mu0[0] = 1.0;
    let general = GmmSpec::general_from_eigenvalues(mu0, &eig, 11)?;
    let w = general.bayes_direction()?;
    println!("general mixture Bayes risk {:.4}", gmm::analytic_risk(&w, &general)?);
    Ok(())
}
