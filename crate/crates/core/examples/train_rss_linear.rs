//! One RSS fit on the mixture against plain ERM, using fixed
//! hyperparameters and an ERM warm start.

use robust_selftrain::gmm::{self, GmmSpec};
use robust_selftrain::trainer::{train_erm_with, train_rss_with, TrainOptions};
use robust_selftrain::TrainConfig;

fn main() -> robust_selftrain::Result<()> {
    let spec = GmmSpec::isotropic_random_mean(200, 1.0, 1.0, 0)?;
    let labeled = gmm::sample_labeled(&spec, 10, 1)?;
    let unlabeled = gmm::sample_unlabeled(&spec, 10_000, 2)?;
    let test = gmm::sample_labeled_balanced(&spec, 10_000, 3)?;

    let mut cfg = TrainConfig {
        learning_rate: 1e-2,
        ..Default::default()
    };
    cfg.robust.gamma = 1.0;
    let erm = train_erm_with(&labeled, &cfg, TrainOptions { test: Some(&test), ..Default::default() })?;
    println!("ERM accuracy {:.4}", erm.test_accuracy.unwrap_or(f64::NAN));

    cfg.robust.lambda = 10.0;
    cfg.robust.gamma_prime = 1e-3;
    let rss = train_rss_with(
        &labeled,
        &unlabeled,
        &cfg,
        TrainOptions { initial: Some(&erm.model), test: Some(&test), ..Default::default() },
    )?;
    println!("RSS accuracy {:.4}", rss.test_accuracy.unwrap_or(f64::NAN));
    for e in rss.epochs.iter().step_by(10) {
        println!("epoch {:>3}  labeled {:.4}  unlabeled {:.4}  total {:.4}", e.epoch, e.labeled, e.unlabeled, e.total);
    }
    Ok(())
}
