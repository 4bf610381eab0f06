//! Isotropic mixture, d = 200, ten labels, growing unlabeled pool.
//! Prints the ERM baseline next to RSS per unlabeled size.
//!
//! cargo run --release --example table1_trend -- [trials] [seeds] [epochs] [shift%]
//!
//! `shift%` moves the unlabeled mean by that percentage of |mu0|.

use std::time::Instant;

use robust_selftrain::experiments::{run_scenario, Method, Scenario};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> robust_selftrain::Result<()> {
    let trials = arg(1, 10);
    let seeds = arg(2, 2) as u64;
    let epochs = arg(3, 50);
    let shift = arg(4, 0) as f64 / 100.0;
    let cfg = Scenario {
        id: "table1".into(),
        d: 200,
        alpha: shift,
        labeled_sizes: vec![10],
        unlabeled_sizes: vec![10, 100, 1000, 10_000],
        trials,
        epochs,
        seeds: (0..seeds).collect(),
        output_dir: std::env::var_os("RSS_OUTPUT_DIR").map(Into::into),
        ..Default::default()
    };
    let t = Instant::now();
    let out = run_scenario(&cfg)?;
    println!("{:>8} {:>8} {:>10} {:>8}", "n", "method", "mean", "std");
    if let Some(r) = out.row(10, 0, Method::Erm) {
        println!("{:>8} {:>8} {:>10.4} {:>8.4}", "-", "ERM", r.mean, r.std);
    }
    for &n in &cfg.unlabeled_sizes {
        if let Some(r) = out.row(10, n, Method::Rss) {
            println!("{:>8} {:>8} {:>10.4} {:>8.4}", n, "RSS", r.mean, r.std);
        }
    }
    for f in &out.failures {
        eprintln!("failed: seed {} n {} {}: {}", f.seed, f.n, f.method.as_str(), f.message);
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
