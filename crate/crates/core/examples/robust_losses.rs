//! Closed-form robust surrogates next to brute-force line searches over the
//! 0-1 loss they are derived from.

use robust_selftrain::inner::{grid_oracle, ZeroOneLoss};
use robust_selftrain::linalg;
use robust_selftrain::losses::{phi_labeled_closed, phi_unlabeled_closed, CostKind};

fn main() -> robust_selftrain::Result<()> {
    let theta = vec![0.6, 0.8];
    let loss = ZeroOneLoss { theta: theta.clone() };
    let x = [0.3, 0.2];

    println!("labeled, y = +1, distance cost");
    println!("{:>8} {:>12} {:>12}", "gamma", "closed", "grid");
    for gamma in [0.5, 1.0, 2.0, 8.0] {
        let closed = phi_labeled_closed(&theta, &x, 1.0, gamma)?;
        let (grid, _) = grid_oracle(&loss, &x, 1.0, gamma, CostKind::L2, 10.0, 1e-4)?;
        println!("{gamma:>8} {closed:>12.6} {grid:>12.6}");
    }

    // self-label of x under theta
    let y = if linalg::dot(&theta, &x) >= 0.0 { 1.0 } else { -1.0 };
    println!("\nunlabeled, self-labeled, squared cost");
    println!("{:>8} {:>12} {:>12}", "gamma'", "closed", "grid");
    for gp in [0.01, 0.1, 1.0, 10.0] {
        let closed = phi_unlabeled_closed(&theta, &x, gp)?;
        let (grid, _) = grid_oracle(&loss, &x, y, gp, CostKind::L2Squared, 10.0, 1e-4)?;
        println!("{gp:>8} {closed:>12.6} {grid:>12.6}");
    }
    Ok(())
}
