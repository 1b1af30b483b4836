//! Variable selection for kernel two-sample comparison.
//!
//! Given two datasets over the same variables, this crate optimises the
//! per-variable ARD weights of a Gaussian-kernel MMD statistic to maximise
//! a test-power proxy under L1 regularisation, and identifies which
//! variables carry the distributional difference. Two procedures handle
//! the regularisation strength: a data-driven single-parameter selection
//! and a cross-validation aggregation over the whole candidate range, both
//! scored by sliced-Wasserstein permutation tests on held-out data.

pub mod bench;
pub mod data;
pub mod error;
pub mod kernel;
pub mod mmd;
pub mod optimizer;
pub mod selection;
pub mod swdtest;

pub use data::{load_csv, save_csv, split_pair, RngStream, SamplePair, SplitPair};
pub use error::{Error, Result};
pub use kernel::{ard_kernel, gram_matrix, mean_lengthscales, median_lengthscales, KernelParams};
pub use mmd::{
    mmd_linear, mmd_u, objective_value, ratio_objective, regularized_loss, variance_linear,
    variance_u, Estimator, LossAndGrad, ObjectiveConfig, ObjectiveKind,
};
pub use optimizer::{adam_step, train_ard, AdamState, TrainConfig, TrainResult};
pub use selection::{
    cv_aggregation, generate_lambda_grid, histogram_threshold, model_selection, select_variables,
    AggregationVariant, GridConfig, LambdaGrid, PerLambdaDiagnostics, PipelineConfig,
    SelectionResult,
};
pub use swdtest::{permutation_pvalue, sliced_wasserstein, PermutationTestConfig};
