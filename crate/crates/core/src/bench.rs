//! Synthetic benchmark settings, evaluation metrics and the two
//! self-contained baseline methods (unregularised ARD optimisation and
//! L1-penalised logistic regression).

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{RngStream, SamplePair};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::mmd::objective_value;
use crate::optimizer::train_ard_inner;
use crate::selection::{
    histogram_threshold, select_variables, PerLambdaDiagnostics, PipelineConfig, SelectionResult,
};
use crate::swdtest::permutation_pvalue;

/// The synthetic data-generating processes. The base distribution is the
/// standard Gaussian; each alternative changes the first `floor(rho * dim)`
/// coordinates, which form the ground-truth set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingKind {
    /// Ground-truth coordinates shift their mean to 0.5.
    ShiftedMeans,
    /// Ground-truth variance grows to 1.5.
    WiderVariances,
    /// Ground-truth variance shrinks to 0.5.
    NarrowerVariances,
    /// Ground-truth coordinates become unit-variance Laplace.
    Laplace,
    /// One Gaussian draw copied across all ground-truth coordinates, so
    /// univariate marginals stay standard normal.
    CorrelatedGaussian,
    /// Mean shift on the ground truth; every other coordinate is the
    /// constant 0 in both datasets.
    RedundantDirac,
    /// Blockwise-increasing variances; ground-truth coordinates are an
    /// elementwise product of two Gaussians.
    HighdimScalemix,
    /// No difference at all.
    H0Gaussian,
}

impl SettingKind {
    pub const ALL: [SettingKind; 8] = [
        SettingKind::ShiftedMeans,
        SettingKind::WiderVariances,
        SettingKind::NarrowerVariances,
        SettingKind::Laplace,
        SettingKind::CorrelatedGaussian,
        SettingKind::RedundantDirac,
        SettingKind::HighdimScalemix,
        SettingKind::H0Gaussian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SettingKind::ShiftedMeans => "shifted_means",
            SettingKind::WiderVariances => "wider_variances",
            SettingKind::NarrowerVariances => "narrower_variances",
            SettingKind::Laplace => "laplace",
            SettingKind::CorrelatedGaussian => "correlated_gaussian",
            SettingKind::RedundantDirac => "redundant_dirac",
            SettingKind::HighdimScalemix => "highdim_scalemix",
            SettingKind::H0Gaussian => "h0_gaussian",
        }
    }

    fn is_null(&self) -> bool {
        matches!(self, SettingKind::H0Gaussian)
    }
}

impl std::str::FromStr for SettingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown synthetic setting {s:?}")))
    }
}

/// One synthetic experiment configuration.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSetting {
    pub kind: SettingKind,
    pub dim: usize,
    /// Fraction of ground-truth variables.
    pub rho: f64,
    /// Rows per dataset.
    pub n: usize,
    pub seed: RngStream,
}

/// Precision, recall and F score of a selected set against the truth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Unit-variance Laplace draw: scale `b = 1/sqrt(2)` makes `2 b^2 = 1`.
fn unit_laplace(rng: &mut ChaCha8Rng) -> f64 {
    let b = std::f64::consts::FRAC_1_SQRT_2;
    let u: f64 = rng.random_range(-0.5..0.5);
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draws a sample pair from the setting. Returns the pair and the
/// ground-truth variable set (empty for the null setting).
pub fn generate(setting: &SyntheticSetting) -> Result<(SamplePair, Vec<usize>)> {
    let d = setting.dim;
    let n = setting.n;
    if d == 0 || n < 2 {
        return Err(Error::InvalidConfig(format!("need dim >= 1 and n >= 2, got dim={d}, n={n}")));
    }
    let truth_len = if setting.kind.is_null() { 0 } else { (setting.rho * d as f64).floor() as usize };
    if !setting.kind.is_null() {
        if !(setting.rho > 0.0 && setting.rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0,1), got {}", setting.rho)));
        }
        if truth_len < 1 {
            return Err(Error::InvalidConfig(format!(
                "floor(rho * dim) = {truth_len}; alternatives need at least one ground-truth variable"
            )));
        }
        if setting.kind == SettingKind::CorrelatedGaussian && truth_len < 2 {
            return Err(Error::InvalidConfig(
                "correlated_gaussian needs at least two ground-truth coordinates".into(),
            ));
        }
    }
    let truth: Vec<usize> = (0..truth_len).collect();
    let mut rng = setting.seed.rng();

    // Per-coordinate standard deviations of the base distribution.
    let base_sd: Vec<f64> = match setting.kind {
        SettingKind::HighdimScalemix => (0..d).map(|i| ((i / 10 + 1) as f64).sqrt()).collect(),
        _ => vec![1.0; d],
    };

    let mut x = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            let v = match setting.kind {
                SettingKind::RedundantDirac if j >= truth_len => 0.0,
                _ => base_sd[j] * standard_normal(&mut rng),
            };
            x[[i, j]] = v;
        }
    }

    let mut y = Array2::zeros((n, d));
    for i in 0..n {
        match setting.kind {
            SettingKind::ShiftedMeans | SettingKind::RedundantDirac => {
                for j in 0..d {
                    y[[i, j]] = if j < truth_len {
                        standard_normal(&mut rng) + 0.5
                    } else if setting.kind == SettingKind::RedundantDirac {
                        0.0
                    } else {
                        standard_normal(&mut rng)
                    };
                }
            }
            SettingKind::WiderVariances | SettingKind::NarrowerVariances => {
                let sd = if setting.kind == SettingKind::WiderVariances {
                    1.5f64.sqrt()
                } else {
                    0.5f64.sqrt()
                };
                for j in 0..d {
                    let scale = if j < truth_len { sd } else { 1.0 };
                    y[[i, j]] = scale * standard_normal(&mut rng);
                }
            }
            SettingKind::Laplace => {
                for j in 0..d {
                    y[[i, j]] = if j < truth_len {
                        unit_laplace(&mut rng)
                    } else {
                        standard_normal(&mut rng)
                    };
                }
            }
            SettingKind::CorrelatedGaussian => {
                let shared = standard_normal(&mut rng);
                for j in 0..d {
                    y[[i, j]] = if j < truth_len { shared } else { standard_normal(&mut rng) };
                }
            }
            SettingKind::HighdimScalemix => {
                for j in 0..d {
                    y[[i, j]] = if j < truth_len {
                        let scaled = base_sd[j] * standard_normal(&mut rng);
                        let z = standard_normal(&mut rng);
                        scaled * z
                    } else {
                        base_sd[j] * standard_normal(&mut rng)
                    };
                }
            }
            SettingKind::H0Gaussian => {
                for j in 0..d {
                    y[[i, j]] = standard_normal(&mut rng);
                }
            }
        }
    }

    Ok((SamplePair::new(x, y, None)?, truth))
}

/// Precision, recall and F score. An empty selection scores zero across
/// the board.
pub fn evaluate(selected: &[usize], truth: &[usize]) -> EvalMetrics {
    let truth_set: std::collections::BTreeSet<usize> = truth.iter().copied().collect();
    let hit = selected.iter().filter(|d| truth_set.contains(d)).count() as f64;
    let precision = if selected.is_empty() { 0.0 } else { hit / selected.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hit / truth.len() as f64 };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvalMetrics { precision, recall, f_score }
}

/// The unregularised baseline: optimise the test-power objective on the
/// full pair with `lambda = 0` and select by the histogram threshold.
pub fn mmd_baseline(pair: &SamplePair, cfg: &PipelineConfig, rng: &RngStream) -> Result<SelectionResult> {
    let trained = train_ard_inner(
        pair,
        None,
        &cfg.lengthscales,
        0.0,
        &cfg.objective,
        &cfg.train,
        &rng.child(0),
    )?;
    let weights_abs: Vec<f64> = trained.weights.iter().map(|w| w.abs()).collect();
    let threshold = histogram_threshold(&weights_abs, cfg.histogram_bins);
    let selected = select_variables(&weights_abs, threshold);
    let params = KernelParams::new(trained.weights, cfg.lengthscales.clone())?;
    let objective_val = objective_value(pair, &params, &cfg.objective)?;
    let p_value = if selected.is_empty() {
        1.0
    } else {
        let restricted = pair.restrict_columns(&selected)?;
        permutation_pvalue(restricted.x(), restricted.y(), &cfg.test.with_seed(rng.child(1)))?
    };
    let normalized_weights = {
        let max = weights_abs.iter().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            weights_abs.iter().map(|w| w / max).collect()
        } else {
            vec![0.0; weights_abs.len()]
        }
    };
    Ok(SelectionResult {
        selected: selected.clone(),
        score_vector: None,
        chosen_lambda: Some(0.0),
        diagnostics: vec![PerLambdaDiagnostics {
            lambda: 0.0,
            split: 0,
            weights: weights_abs,
            normalized_weights,
            objective_val,
            p_value,
            selected,
        }],
        fallback_used: false,
    })
}

/// Configuration for the logistic-regression baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// log10 range of the inverse regularisation strength.
    pub log10_c_min: f64,
    pub log10_c_max: f64,
    pub grid_points: usize,
    pub folds: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            log10_c_min: -4.0,
            log10_c_max: 4.0,
            grid_points: 9,
            folds: 5,
            max_iterations: 5000,
            tolerance: 1e-7,
        }
    }
}

struct LogisticFit {
    coefficients: Vec<f64>,
    intercept: f64,
    converged: bool,
}

/// L1-penalised linear logistic regression by proximal gradient descent.
/// Minimises `c * sum_i log(1 + exp(-y_i (w' x_i + b))) + ||w||_1` with an
/// unpenalised intercept and step size from a Lipschitz bound.
fn fit_l1_logistic(
    rows: &Array2<f64>,
    labels: &[f64],
    inverse_reg: f64,
    cfg: &LogisticConfig,
) -> LogisticFit {
    let n = rows.nrows();
    let d = rows.ncols();
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    // Smooth-part Lipschitz bound: c/4 * (||X||_F^2 + n) covers the
    // intercept column of ones.
    let frob: f64 = rows.iter().map(|v| v * v).sum::<f64>() + n as f64;
    let lipschitz = inverse_reg * frob / 4.0;
    let step = 1.0 / lipschitz.max(1e-12);
    let mut grad_w = vec![0.0f64; d];
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for i in 0..n {
            let row = rows.row(i);
            let mut margin = b;
            for (v, wd) in row.iter().zip(&w) {
                margin += v * wd;
            }
            let z = labels[i] * margin;
            // d/dz log(1 + e^{-z}) = -1/(1 + e^z)
            let s = -1.0 / (1.0 + z.exp());
            let coef = inverse_reg * labels[i] * s;
            for (g, v) in grad_w.iter_mut().zip(row.iter()) {
                *g += coef * v;
            }
            grad_b += coef;
        }
        let mut delta = 0.0f64;
        for dd in 0..d {
            let candidate = w[dd] - step * grad_w[dd];
            // Soft threshold at step * 1 (the L1 weight).
            let next = candidate.signum() * (candidate.abs() - step).max(0.0);
            delta = delta.max((next - w[dd]).abs());
            w[dd] = next;
        }
        let next_b = b - step * grad_b;
        delta = delta.max((next_b - b).abs());
        b = next_b;
        if delta < cfg.tolerance {
            converged = true;
            break;
        }
    }
    LogisticFit { coefficients: w, intercept: b, converged }
}

fn classification_accuracy(fit: &LogisticFit, rows: &Array2<f64>, labels: &[f64]) -> f64 {
    let mut correct = 0usize;
    for (i, row) in rows.rows().into_iter().enumerate() {
        let mut margin = fit.intercept;
        for (v, wd) in row.iter().zip(&fit.coefficients) {
            margin += v * wd;
        }
        let predicted = if margin >= 0.0 { 1.0 } else { -1.0 };
        if predicted == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// Classifier two-sample baseline: label the pooled rows by dataset, fit
/// L1 logistic regression with the inverse regularisation picked by k-fold
/// cross-validated accuracy, and select variables from the coefficient
/// magnitudes with the histogram threshold.
pub fn logistic_baseline(
    pair: &SamplePair,
    cfg: &LogisticConfig,
    rng: &RngStream,
) -> Result<SelectionResult> {
    if pair.n() < 10 || pair.m() < 10 {
        return Err(Error::InvalidData(format!(
            "logistic baseline needs at least 10 rows per dataset, got {} and {}",
            pair.n(),
            pair.m()
        )));
    }
    let n = pair.n();
    let m = pair.m();
    let d = pair.dim();
    let total = n + m;
    let mut rows = Array2::zeros((total, d));
    let mut labels = vec![0.0f64; total];
    for i in 0..n {
        rows.row_mut(i).assign(&pair.x().row(i));
        labels[i] = 1.0;
    }
    for j in 0..m {
        rows.row_mut(n + j).assign(&pair.y().row(j));
        labels[n + j] = -1.0;
    }

    // Deterministic shuffled fold assignment.
    let mut order: Vec<usize> = (0..total).collect();
    {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng.child(0).rng());
    }

    let grid: Vec<f64> = (0..cfg.grid_points)
        .map(|k| {
            let t = if cfg.grid_points == 1 {
                0.0
            } else {
                k as f64 / (cfg.grid_points - 1) as f64
            };
            10f64.powf(cfg.log10_c_min + t * (cfg.log10_c_max - cfg.log10_c_min))
        })
        .collect();

    let mut best_c = grid[0];
    let mut best_accuracy = f64::NEG_INFINITY;
    for &c in &grid {
        let mut fold_acc = 0.0;
        for fold in 0..cfg.folds {
            let val_idx: Vec<usize> = order
                .iter()
                .enumerate()
                .filter(|(pos, _)| pos % cfg.folds == fold)
                .map(|(_, &i)| i)
                .collect();
            let train_idx: Vec<usize> = order
                .iter()
                .enumerate()
                .filter(|(pos, _)| pos % cfg.folds != fold)
                .map(|(_, &i)| i)
                .collect();
            let train_rows = rows.select(ndarray::Axis(0), &train_idx);
            let train_labels: Vec<f64> = train_idx.iter().map(|&i| labels[i]).collect();
            let val_rows = rows.select(ndarray::Axis(0), &val_idx);
            let val_labels: Vec<f64> = val_idx.iter().map(|&i| labels[i]).collect();
            let fit = fit_l1_logistic(&train_rows, &train_labels, c, cfg);
            fold_acc += classification_accuracy(&fit, &val_rows, &val_labels);
        }
        fold_acc /= cfg.folds as f64;
        if fold_acc > best_accuracy {
            best_accuracy = fold_acc;
            best_c = c;
        }
    }

    let fit = fit_l1_logistic(&rows, &labels, best_c, cfg);
    if !fit.converged {
        log::warn!(
            "logistic baseline hit the {}-iteration cap at C={best_c:e}; using the final iterate",
            cfg.max_iterations
        );
    }
    let magnitudes: Vec<f64> = fit.coefficients.iter().map(|w| w.abs()).collect();
    let threshold = histogram_threshold(&magnitudes, 100);
    let selected = select_variables(&magnitudes, threshold);
    let normalized = {
        let max = magnitudes.iter().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            magnitudes.iter().map(|w| w / max).collect()
        } else {
            vec![0.0; magnitudes.len()]
        }
    };
    Ok(SelectionResult {
        selected: selected.clone(),
        score_vector: None,
        chosen_lambda: Some(best_c),
        diagnostics: vec![PerLambdaDiagnostics {
            lambda: best_c,
            split: 0,
            weights: magnitudes,
            normalized_weights: normalized,
            objective_val: best_accuracy,
            p_value: 1.0,
            selected,
        }],
        fallback_used: false,
    })
}
