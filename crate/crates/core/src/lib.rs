//! Robust self-supervised (RSS) training: a Wasserstein-robust labeled risk
//! plus a λ-weighted robust penalty on self-labeled, possibly shifted,
//! unlabeled data. Includes a Gaussian-mixture simulation bench,
//! plug-in hyperparameter prescriptions, and evaluators for the associated
//! generalization bounds.

pub mod bounds;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod gmm;
pub mod hyperparams;
pub mod inner;
pub mod linalg;
pub mod losses;
pub mod models;
pub mod optim;
pub mod trainer;

pub use dataset::{LabelSchema, LabeledSet, UnlabeledSet};
pub use error::{Error, Result};
pub use gmm::{analytic_risk, make_shifted_spec, sample_labeled, sample_unlabeled, Covariance, GmmSpec};
pub use inner::{adversarial_perturb, grid_oracle, InnerSolverConfig, StepDecay};
pub use losses::{phi_labeled_closed, phi_numeric, phi_unlabeled_closed, CostKind, RobustConfig, Surrogate};
pub use models::{LinearParams, LossKind, MlpParams, Model, ModelSpec};
pub use trainer::{train_erm, train_rss, TrainConfig, TrainReport};

/// Derives an independent stream seed from a base seed and a tag
/// (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
