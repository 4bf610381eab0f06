//! Synthetic 1024-d "embeddings" written to CSV with text labels, ingested
//! back and used to train an MLP with the numeric robust surrogate.

use robust_selftrain::dataset::LabelSchema;
use robust_selftrain::experiments::ingest_embeddings;
use robust_selftrain::gmm::{self, GmmSpec};
use robust_selftrain::losses::Surrogate;
use robust_selftrain::models::{LossKind, ModelSpec};
use robust_selftrain::trainer::{train_rss_with, TrainOptions};
use robust_selftrain::TrainConfig;

fn main() -> robust_selftrain::Result<()> {
    let dir = std::env::temp_dir().join("rss_embeddings_example");
    std::fs::create_dir_all(&dir)?;
    let spec = GmmSpec::isotropic_random_mean(1024, 3.0, 1.0, 5)?;
    let labeled = gmm::sample_labeled(&spec, 200, 1)?;
    let unlabeled = gmm::sample_unlabeled(&spec, 400, 2)?;
    let test = gmm::sample_labeled_balanced(&spec, 1000, 3)?;

    // write labels as class names to exercise the schema
    let mut w = csv::Writer::from_path(dir.join("labeled.csv"))?;
    w.write_record(std::iter::once("label".to_string()).chain((0..1024).map(|j| format!("f{j}"))))?;
    for i in 0..labeled.len() {
        let (x, y) = labeled.sample(i);
        let name = if y > 0.0 { "tumor" } else { "normal" };
        w.write_record(std::iter::once(name.to_string()).chain(x.iter().map(|v| format!("{v:?}"))))?;
    }
    w.flush()?;
    unlabeled.save_csv(dir.join("unlabeled.csv"))?;

    let schema = LabelSchema::from_pairs([("tumor", 1), ("normal", -1)])?;
    let (labeled, unlabeled) = ingest_embeddings(dir.join("labeled.csv"), dir.join("unlabeled.csv"), &schema)?;
    println!("ingested {} x {} labeled, {} unlabeled", labeled.len(), labeled.dim(), unlabeled.len());

    let mut cfg = TrainConfig {
        epochs: 10,
        learning_rate: 1e-3,
        model: ModelSpec::Mlp { hidden: vec![64, 64], leaky_slope: 0.01 },
        ..Default::default()
    };
    cfg.robust.surrogate = Surrogate::Numeric { base: LossKind::CrossEntropy };
    cfg.robust.inner.steps = 5;
    cfg.robust.gamma = 10.0;
    cfg.robust.gamma_prime = 10.0;
    cfg.robust.lambda = 0.1;
    let report = train_rss_with(&labeled, &unlabeled, &cfg, TrainOptions { test: Some(&test), ..Default::default() })?;
    println!("MLP test accuracy {:.4} in {:.1}s", report.test_accuracy.unwrap_or(f64::NAN), report.wall_clock_secs);
    Ok(())
}
