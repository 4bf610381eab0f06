//! Inner gradient ascent on a small MLP with cross-entropy, printing the
//! objective trace and the distance moved.

use robust_selftrain::inner::{adversarial_perturb_traced, InnerSolverConfig, ModelLoss};
use robust_selftrain::linalg;
use robust_selftrain::losses::CostKind;
use robust_selftrain::models::{LossKind, Model, ModelSpec};

fn main() -> robust_selftrain::Result<()> {
    let model: Model = ModelSpec::Mlp { hidden: vec![16], leaky_slope: 0.01 }.build(4, 3)?;
    let loss = ModelLoss { model: &model, kind: LossKind::CrossEntropy };
    let x = [0.5, -0.2, 0.1, 0.9];
    let cfg = InnerSolverConfig::default();

    for gamma in [0.1, 1.0, 10.0] {
        let (p, trace) = adversarial_perturb_traced(&loss, &x, 1.0, gamma, CostKind::L2Squared, &cfg)?;
        let shown: Vec<String> = trace.iter().map(|v| format!("{v:.3}")).collect();
        println!("gamma {gamma:>5}: phi {:.4}  |z-x| {:.4}", p.objective, linalg::distance(&p.z, &x));
        println!("  trace {}", shown.join(" "));
    }
    Ok(())
}
