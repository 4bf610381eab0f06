//! Log-uniform random search over the default space on a toy objective,
//! with the trial log written as CSV to stdout.

use robust_selftrain::hyperparams::{random_search, SearchSpace};

fn main() -> robust_selftrain::Result<()> {
    let space = SearchSpace::default();
    // peaks at learning rate 1e-2 and lambda 10
    let res = random_search(
        &space,
        30,
        |h| {
            if h.gamma > 10.0 {
                return Err("gamma too large for this toy".into());
            }
            Ok(-(h.learning_rate.log10() + 2.0).powi(2) - (h.lambda.log10() - 1.0).powi(2))
        },
        42,
    )?;
    if let Some((trial, exps, score)) = &res.best {
        println!("best trial {trial}: {exps:?} score {score:.3}");
    }
    res.write_log(std::io::stdout())?;
    Ok(())
}
