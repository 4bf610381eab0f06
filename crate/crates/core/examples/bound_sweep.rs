//! Bound residuals over a small grid plus the crossover rule, written to
//! `bounds.csv` in the output directory.

use robust_selftrain::bounds::{sample_regime, emit_bound_sweep, thm1_residual, thm3_residual, BoundGrid, BoundInputs};
use robust_selftrain::experiments::default_output_dir;
use robust_selftrain::gmm::{Covariance, FullCovariance};

fn main() -> robust_selftrain::Result<()> {
    let inp = BoundInputs::isotropic(10, 10_000, 200, 0.0, 0.05, 1.0, 1.0, 1.0, 1.0, 1.0);
    let r = thm1_residual(&inp)?;
    println!("thm1 residual {:.4}", r.residual);
    for (k, v) in &r.breakdown {
        println!("  {k:<12} {v:.4}");
    }

    let mut general = inp.clone();
    let diag: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 / 200.0).collect();
    general.cov0 = Covariance::Full(FullCovariance::from_diagonal(&diag)?);
    general.cov1 = general.cov0.clone();
    println!("thm3 residual {:.4}", thm3_residual(&general)?.residual);

    for (m, n) in [(10, 10), (10, 1), (1000, 1000), (1000, 10_000)] {
        let c = sample_regime(m, n, 200, 0.0);
        println!("m {m:>5} n {n:>6}: advantage {} dimension-free {}", c.advantage, c.dim_free);
    }

    let grid = BoundGrid {
        m: vec![10, 100],
        n: vec![100, 10_000, 1_000_000],
        d: vec![50, 200],
        alpha: vec![0.0, 0.25],
        ..Default::default()
    };
    let dir = default_output_dir();
    std::fs::create_dir_all(&dir)?;
    let rows = emit_bound_sweep(&grid, dir.join("bounds.csv"))?;
    println!("{rows} rows -> {}", dir.join("bounds.csv").display());
    Ok(())
}
