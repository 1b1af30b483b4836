//! Variable selection from weight vectors, candidate-lambda generation,
//! the single-split model-selection procedure and the cross-validation
//! aggregation procedure with its ten scoring variants.

use serde::{Deserialize, Serialize};

use crate::data::{equalize_rows, split_pair, RngStream, SamplePair};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::mmd::{objective_value, ObjectiveConfig};
use crate::optimizer::{train_ard, train_ard_inner, TrainConfig};
use crate::swdtest::{permutation_pvalue, PermutationTestConfig};

/// Candidate regularisation parameters.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaGrid {
    pub lower: f64,
    pub count: usize,
    pub history_window: usize,
    /// Strictly increasing candidate values; the first equals `lower`.
    pub values: Vec<f64>,
}

impl LambdaGrid {
    /// A grid with explicitly given values, for callers that bypass the
    /// data-driven range search.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("lambda grid cannot be empty".into()));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("lambda grid must be strictly increasing".into()));
        }
        Ok(Self { lower: values[0], count: values.len(), history_window: 3, values })
    }
}

/// Knobs of the candidate-range search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridConfig {
    pub lower: f64,
    pub count: usize,
    pub history_window: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lower: 0.01, count: 6, history_window: 3 }
    }
}

/// Everything recorded for one trained `(lambda, split)` cell.
#[derive(Debug, Clone, Serialize)]
pub struct PerLambdaDiagnostics {
    pub lambda: f64,
    pub split: usize,
    /// Magnitudes of the optimised ARD weights.
    pub weights: Vec<f64>,
    /// Weights divided by their maximum (zero vector when all weights are zero).
    pub normalized_weights: Vec<f64>,
    /// Objective value on validation data.
    pub objective_val: f64,
    pub p_value: f64,
    pub selected: Vec<usize>,
}

/// Output of either selection algorithm.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    /// Selected variable indices, ascending.
    pub selected: Vec<usize>,
    /// Aggregated score vector (CV aggregation only).
    pub score_vector: Option<Vec<f64>>,
    /// The winning regularisation parameter (model selection only).
    pub chosen_lambda: Option<f64>,
    pub diagnostics: Vec<PerLambdaDiagnostics>,
    /// Model selection: no candidate had a significant p-value and the
    /// argmin-p rule decided. CV aggregation: every cell was filtered out
    /// and the score vector is identically zero.
    pub fallback_used: bool,
}

/// The aggregation strategies for the CV score vector. Half score selected
/// variables by membership, half score the normalised ARD weights; each can
/// be weighted by `1 - p`, the validation objective, a significance filter,
/// or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationVariant {
    PlaneVariable,
    PValueVariable,
    TestPowerVariable,
    PValueFilterVariable,
    PValueFilterTestPowerVariable,
    PlaneArd,
    PValueArd,
    TestPowerArd,
    PValueFilterArd,
    #[default]
    PValueFilterTestPowerArd,
}

impl AggregationVariant {
    pub const ALL: [AggregationVariant; 10] = [
        AggregationVariant::PlaneVariable,
        AggregationVariant::PValueVariable,
        AggregationVariant::TestPowerVariable,
        AggregationVariant::PValueFilterVariable,
        AggregationVariant::PValueFilterTestPowerVariable,
        AggregationVariant::PlaneArd,
        AggregationVariant::PValueArd,
        AggregationVariant::TestPowerArd,
        AggregationVariant::PValueFilterArd,
        AggregationVariant::PValueFilterTestPowerArd,
    ];
}

impl AggregationVariant {
    pub fn name(&self) -> &'static str {
        use AggregationVariant::*;
        match self {
            PlaneVariable => "plane-variable",
            PValueVariable => "p-value-variable",
            TestPowerVariable => "test-power-variable",
            PValueFilterVariable => "p-value-filter-variable",
            PValueFilterTestPowerVariable => "p-value-filter-test-power-variable",
            PlaneArd => "plane-ard",
            PValueArd => "p-value-ard",
            TestPowerArd => "test-power-ard",
            PValueFilterArd => "p-value-filter-ard",
            PValueFilterTestPowerArd => "p-value-filter-test-power-ard",
        }
    }
}

impl std::str::FromStr for AggregationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|v| v.name() == s)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown aggregation variant {s:?}")))
    }
}

/// Shared configuration for the selection pipelines.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub lengthscales: Vec<f64>,
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
    pub test: PermutationTestConfig,
    /// Train fraction of every split.
    pub rho_train: f64,
    /// Number of cross-validation splits for the aggregation algorithm.
    pub k_splits: usize,
    pub variant: AggregationVariant,
    pub histogram_bins: usize,
}

impl PipelineConfig {
    pub fn new(lengthscales: Vec<f64>) -> Self {
        Self {
            lengthscales,
            objective: ObjectiveConfig::default(),
            train: TrainConfig::default(),
            test: PermutationTestConfig::new(RngStream::new(0)),
            rho_train: 0.5,
            k_splits: 10,
            variant: AggregationVariant::default(),
            histogram_bins: 100,
        }
    }
}

/// Data-driven selection threshold: build an equal-width histogram of the
/// weight magnitudes and return the lower edge of the smallest-valued
/// zero-frequency bin. Returns 0 when the range is degenerate or no bin
/// is empty.
pub fn histogram_threshold(weights: &[f64], bins: usize) -> f64 {
    if weights.is_empty() || bins == 0 {
        return 0.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in weights {
        let v = w.abs();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return 0.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for w in weights {
        let idx = (((w.abs() - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    match counts.iter().position(|c| *c == 0) {
        Some(idx) => lo + idx as f64 * width,
        None => 0.0,
    }
}

/// Indices whose weight magnitude strictly exceeds the threshold.
pub fn select_variables(weights: &[f64], threshold: f64) -> Vec<usize> {
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| w.abs() > threshold)
        .map(|(d, _)| d)
        .collect()
}

fn normalize_abs(weights_abs: &[f64]) -> Vec<f64> {
    let max = weights_abs.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        weights_abs.iter().map(|w| w / max).collect()
    } else {
        vec![0.0; weights_abs.len()]
    }
}

fn update_lambda(previous: f64) -> f64 {
    if previous < 1.0 {
        2.0 * previous
    } else {
        previous + 0.5
    }
}

fn stop_criteria(history: &[Vec<usize>], window: usize) -> bool {
    let last = match history.last() {
        Some(l) => l,
        None => return false,
    };
    if last.len() == 1 {
        return true;
    }
    if history.len() >= window {
        let tail = &history[history.len() - window..];
        if tail.iter().all(|s| s == last) {
            return true;
        }
    }
    false
}

fn emit_grid(lower: f64, upper: f64, count: usize) -> Vec<f64> {
    if upper <= lower {
        return vec![lower];
    }
    let step = (upper - lower) / (count - 1) as f64;
    let mut values: Vec<f64> = (0..count).map(|k| lower + k as f64 * step).collect();
    // The last grid point is the upper bound itself; the linspace endpoint
    // may differ from it by rounding.
    *values.last_mut().expect("count >= 2") = upper;
    values.dedup();
    values
}

/// Hard cap on range-search iterations; the selection history makes the
/// search terminate long before this in practice.
const MAX_RANGE_ITERATIONS: usize = 64;

/// Data-driven candidate range: grow lambda from `grid.lower` until a
/// single variable survives selection or the selected set stops changing,
/// then spread `grid.count` evenly spaced candidates over the range.
/// Trains on the full pair, without splitting.
pub fn generate_lambda_grid(
    pair: &SamplePair,
    lengthscales: &[f64],
    obj: &ObjectiveConfig,
    train_cfg: &TrainConfig,
    grid: &GridConfig,
    rng: &RngStream,
) -> Result<LambdaGrid> {
    if grid.count < 2 {
        return Err(Error::InvalidConfig("grid count must be >= 2".into()));
    }
    if !(grid.lower > 0.0) {
        return Err(Error::InvalidConfig("grid lower bound must be > 0".into()));
    }
    let mut lambda = grid.lower;
    let mut history: Vec<Vec<usize>> = Vec::new();
    for iteration in 0..MAX_RANGE_ITERATIONS {
        let trained = train_ard_inner(
            pair,
            None,
            lengthscales,
            lambda,
            obj,
            train_cfg,
            &rng.child(iteration as u64),
        )?;
        let weights_abs: Vec<f64> = trained.weights.iter().map(|w| w.abs()).collect();
        let threshold = histogram_threshold(&weights_abs, 100);
        history.push(select_variables(&weights_abs, threshold));
        if stop_criteria(&history, grid.history_window) {
            break;
        }
        lambda = update_lambda(lambda);
    }
    Ok(LambdaGrid {
        lower: grid.lower,
        count: grid.count,
        history_window: grid.history_window,
        values: emit_grid(grid.lower, lambda, grid.count),
    })
}

/// Trains, scores and tests one `(lambda, split)` cell.
fn evaluate_cell(
    train: &SamplePair,
    val: &SamplePair,
    lambda: f64,
    split_index: usize,
    cfg: &PipelineConfig,
    stream: &RngStream,
) -> Result<PerLambdaDiagnostics> {
    let trained = train_ard(
        train,
        val,
        &cfg.lengthscales,
        lambda,
        &cfg.objective,
        &cfg.train,
        &stream.child(0),
    )?;
    let params = KernelParams::new(trained.weights.clone(), cfg.lengthscales.clone())?;
    let val_eq = equalize_rows(val, &stream.child(1));
    let objective_val = objective_value(&val_eq, &params, &cfg.objective)?;
    let weights_abs: Vec<f64> = trained.weights.iter().map(|w| w.abs()).collect();
    let threshold = histogram_threshold(&weights_abs, cfg.histogram_bins);
    let selected = select_variables(&weights_abs, threshold);
    // An empty selection offers no evidence against the null.
    let p_value = if selected.is_empty() {
        1.0
    } else {
        let restricted = val.restrict_columns(&selected)?;
        permutation_pvalue(
            restricted.x(),
            restricted.y(),
            &cfg.test.with_seed(stream.child(2)),
        )?
    };
    let normalized_weights = normalize_abs(&weights_abs);
    Ok(PerLambdaDiagnostics {
        lambda,
        split: split_index,
        weights: weights_abs,
        normalized_weights,
        objective_val,
        p_value,
        selected,
    })
}

/// Decision rule of the model-selection algorithm: the index with the
/// highest validation objective among significant candidates, else the
/// smallest p-value. Ties break towards smaller lambda.
fn choose_lambda(diagnostics: &[PerLambdaDiagnostics], alpha: f64) -> (usize, bool) {
    let mut best: Option<usize> = None;
    for (i, diag) in diagnostics.iter().enumerate() {
        if diag.p_value < alpha {
            let better = match best {
                None => true,
                Some(j) => diag.objective_val > diagnostics[j].objective_val,
            };
            if better {
                best = Some(i);
            }
        }
    }
    if let Some(i) = best {
        return (i, false);
    }
    let mut min_idx = 0;
    for (i, diag) in diagnostics.iter().enumerate().skip(1) {
        if diag.p_value < diagnostics[min_idx].p_value {
            min_idx = i;
        }
    }
    (min_idx, true)
}

/// Single-split regularisation-parameter selection: train per candidate on
/// a shared train/validation split, score each by validation objective and
/// selected-variable permutation p-value, and return the winner's set.
pub fn model_selection(
    pair: &SamplePair,
    grid: &LambdaGrid,
    cfg: &PipelineConfig,
    rng: &RngStream,
) -> Result<SelectionResult> {
    if grid.values.is_empty() {
        return Err(Error::InvalidConfig("lambda grid cannot be empty".into()));
    }
    let split = split_pair(pair, cfg.rho_train, &rng.child(0))?;
    let mut diagnostics = Vec::with_capacity(grid.values.len());
    for (li, &lambda) in grid.values.iter().enumerate() {
        diagnostics.push(evaluate_cell(
            &split.train,
            &split.val,
            lambda,
            0,
            cfg,
            &rng.child(1).child(li as u64),
        )?);
    }
    let (winner, fallback_used) = choose_lambda(&diagnostics, cfg.test.alpha);
    Ok(SelectionResult {
        selected: diagnostics[winner].selected.clone(),
        score_vector: None,
        chosen_lambda: Some(diagnostics[winner].lambda),
        diagnostics,
        fallback_used,
    })
}

/// Aggregates per-cell records into the score vector of the chosen
/// variant: an average over splits per lambda, then over lambdas.
/// Negative validation objectives count as zero weight so scores stay
/// nonnegative.
pub fn aggregate_scores(
    diagnostics: &[PerLambdaDiagnostics],
    lambdas: &[f64],
    k_splits: usize,
    alpha: f64,
    variant: AggregationVariant,
    dim: usize,
) -> Vec<f64> {
    let mut score = vec![0.0f64; dim];
    for &lambda in lambdas {
        let mut per_lambda = vec![0.0f64; dim];
        for diag in diagnostics.iter().filter(|d| d.lambda == lambda) {
            let power = diag.objective_val.max(0.0);
            let filter = if diag.p_value < alpha { 1.0 } else { 0.0 };
            let pv = 1.0 - diag.p_value;
            use AggregationVariant::*;
            match variant {
                PlaneVariable | PValueVariable | TestPowerVariable | PValueFilterVariable
                | PValueFilterTestPowerVariable => {
                    let w = match variant {
                        PlaneVariable => 1.0,
                        PValueVariable => pv,
                        TestPowerVariable => power,
                        PValueFilterVariable => filter,
                        PValueFilterTestPowerVariable => filter * power,
                        _ => unreachable!(),
                    };
                    for &d in &diag.selected {
                        per_lambda[d] += w;
                    }
                }
                PlaneArd | PValueArd | TestPowerArd | PValueFilterArd | PValueFilterTestPowerArd => {
                    let w = match variant {
                        PlaneArd => 1.0,
                        PValueArd => pv,
                        TestPowerArd => power,
                        PValueFilterArd => filter,
                        PValueFilterTestPowerArd => filter * power,
                        _ => unreachable!(),
                    };
                    for d in 0..dim {
                        per_lambda[d] += w * diag.normalized_weights[d];
                    }
                }
            }
        }
        for d in 0..dim {
            score[d] += per_lambda[d] / k_splits as f64;
        }
    }
    for s in score.iter_mut() {
        *s /= lambdas.len() as f64;
    }
    score
}

/// Cross-validation aggregation: for every candidate lambda, train and
/// test on `k_splits` independent random splits, aggregate the records
/// into a score vector, and select variables from that vector.
pub fn cv_aggregation(
    pair: &SamplePair,
    grid: &LambdaGrid,
    cfg: &PipelineConfig,
    rng: &RngStream,
) -> Result<SelectionResult> {
    if grid.values.is_empty() {
        return Err(Error::InvalidConfig("lambda grid cannot be empty".into()));
    }
    if cfg.k_splits < 1 {
        return Err(Error::InvalidConfig("k_splits must be >= 1".into()));
    }
    let mut diagnostics = Vec::with_capacity(grid.values.len() * cfg.k_splits);
    for (li, &lambda) in grid.values.iter().enumerate() {
        for split_index in 0..cfg.k_splits {
            let stream = rng.child(2).child((li * cfg.k_splits + split_index) as u64);
            let split = split_pair(pair, cfg.rho_train, &stream.child(10))?;
            diagnostics.push(evaluate_cell(
                &split.train,
                &split.val,
                lambda,
                split_index,
                cfg,
                &stream,
            )?);
        }
    }
    let score = aggregate_scores(
        &diagnostics,
        &grid.values,
        cfg.k_splits,
        cfg.test.alpha,
        cfg.variant,
        pair.dim(),
    );
    let threshold = histogram_threshold(&score, cfg.histogram_bins);
    let selected = select_variables(&score, threshold);
    let fallback_used = score.iter().all(|s| *s == 0.0);
    Ok(SelectionResult {
        selected: if fallback_used { Vec::new() } else { selected },
        score_vector: Some(score),
        chosen_lambda: None,
        diagnostics,
        fallback_used,
    })
}
