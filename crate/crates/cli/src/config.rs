//! Run configuration: one flat JSON object with dotted keys mirroring the
//! library's per-module configs. A serialised `RunConfig` fully determines
//! a run (up to wall time); command-line flags override file values.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use mmdvs_core::{
    bench::LogisticConfig, AggregationVariant, Estimator, GridConfig, ObjectiveConfig,
    ObjectiveKind, PermutationTestConfig, PipelineConfig, RngStream, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelHeuristic {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(rename = "kernel.heuristic")]
    pub kernel_heuristic: KernelHeuristic,
    #[serde(rename = "objective.kind")]
    pub objective_kind: ObjectiveKind,
    #[serde(rename = "objective.estimator")]
    pub estimator: Estimator,
    #[serde(rename = "objective.c_stabilizer")]
    pub c_stabilizer: f64,
    #[serde(rename = "objective.log_floor")]
    pub log_floor: f64,
    #[serde(rename = "train.initial_lr")]
    pub initial_lr: f64,
    #[serde(rename = "train.max_epochs")]
    pub max_epochs: usize,
    #[serde(rename = "train.early_stop_window")]
    pub early_stop_window: usize,
    #[serde(rename = "train.early_stop_tol")]
    pub early_stop_tol: f64,
    #[serde(rename = "train.adam_beta1")]
    pub adam_beta1: f64,
    #[serde(rename = "train.adam_beta2")]
    pub adam_beta2: f64,
    #[serde(rename = "train.adam_eps")]
    pub adam_eps: f64,
    #[serde(rename = "train.plateau_patience")]
    pub plateau_patience: usize,
    #[serde(rename = "train.plateau_factor")]
    pub plateau_factor: f64,
    #[serde(rename = "train.min_lr")]
    pub min_lr: f64,
    #[serde(rename = "train.batch_size")]
    pub batch_size: Option<usize>,
    #[serde(rename = "test.num_permutations")]
    pub num_permutations: usize,
    #[serde(rename = "test.num_projections")]
    pub num_projections: usize,
    #[serde(rename = "test.alpha")]
    pub alpha: f64,
    #[serde(rename = "grid.lower")]
    pub grid_lower: f64,
    #[serde(rename = "grid.count")]
    pub grid_count: usize,
    #[serde(rename = "grid.history_window")]
    pub grid_history_window: usize,
    #[serde(rename = "cv.k")]
    pub cv_k: usize,
    #[serde(rename = "cv.rho_train")]
    pub rho_train: f64,
    #[serde(rename = "cv.variant")]
    pub variant: AggregationVariant,
    #[serde(rename = "histogram.bins")]
    pub histogram_bins: usize,
    #[serde(rename = "logistic.log10_c_min")]
    pub logistic_log10_c_min: f64,
    #[serde(rename = "logistic.log10_c_max")]
    pub logistic_log10_c_max: f64,
    #[serde(rename = "logistic.grid_points")]
    pub logistic_grid_points: usize,
    #[serde(rename = "logistic.folds")]
    pub logistic_folds: usize,
    #[serde(rename = "logistic.max_iterations")]
    pub logistic_max_iterations: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let objective = ObjectiveConfig::default();
        let train = TrainConfig::default();
        let test = PermutationTestConfig::new(RngStream::new(0));
        let grid = GridConfig::default();
        let logistic = LogisticConfig::default();
        Self {
            seed: 0,
            kernel_heuristic: KernelHeuristic::Median,
            objective_kind: objective.kind,
            estimator: objective.estimator,
            c_stabilizer: objective.c_stabilizer,
            log_floor: objective.log_floor,
            initial_lr: train.initial_lr,
            max_epochs: train.max_epochs,
            early_stop_window: train.early_stop_window,
            early_stop_tol: train.early_stop_tol,
            adam_beta1: train.adam_beta1,
            adam_beta2: train.adam_beta2,
            adam_eps: train.adam_eps,
            plateau_patience: train.plateau_patience,
            plateau_factor: train.plateau_factor,
            min_lr: train.min_lr,
            batch_size: train.batch_size,
            num_permutations: test.num_permutations,
            num_projections: test.num_projections,
            alpha: test.alpha,
            grid_lower: grid.lower,
            grid_count: grid.count,
            grid_history_window: grid.history_window,
            cv_k: 10,
            rho_train: 0.5,
            variant: AggregationVariant::default(),
            histogram_bins: 100,
            logistic_log10_c_min: logistic.log10_c_min,
            logistic_log10_c_max: logistic.log10_c_max,
            logistic_grid_points: logistic.grid_points,
            logistic_folds: logistic.folds,
            logistic_max_iterations: logistic.max_iterations,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            c_stabilizer: self.c_stabilizer,
            log_floor: self.log_floor,
            kind: self.objective_kind,
            estimator: self.estimator,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            initial_lr: self.initial_lr,
            max_epochs: self.max_epochs,
            early_stop_window: self.early_stop_window,
            early_stop_tol: self.early_stop_tol,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            plateau_patience: self.plateau_patience,
            plateau_factor: self.plateau_factor,
            min_lr: self.min_lr,
            batch_size: self.batch_size,
        }
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            lower: self.grid_lower,
            count: self.grid_count,
            history_window: self.grid_history_window,
        }
    }

    pub fn logistic(&self) -> LogisticConfig {
        LogisticConfig {
            log10_c_min: self.logistic_log10_c_min,
            log10_c_max: self.logistic_log10_c_max,
            grid_points: self.logistic_grid_points,
            folds: self.logistic_folds,
            max_iterations: self.logistic_max_iterations,
            ..LogisticConfig::default()
        }
    }

    pub fn pipeline(&self, lengthscales: Vec<f64>) -> PipelineConfig {
        let mut test = PermutationTestConfig::new(RngStream::new(self.seed));
        test.num_permutations = self.num_permutations;
        test.num_projections = self.num_projections;
        test.alpha = self.alpha;
        PipelineConfig {
            lengthscales,
            objective: self.objective(),
            train: self.train(),
            test,
            rho_train: self.rho_train,
            k_splits: self.cv_k,
            variant: self.variant,
            histogram_bins: self.histogram_bins,
        }
    }
}
