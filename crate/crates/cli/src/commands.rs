//! Implementations of the CLI subcommands and their JSON reports.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

use mmdvs_core::bench::{generate, evaluate, logistic_baseline, mmd_baseline, SettingKind, SyntheticSetting};
use mmdvs_core::{
    cv_aggregation, generate_lambda_grid, load_csv, mean_lengthscales, median_lengthscales,
    mmd_linear, mmd_u, model_selection, objective_value, save_csv, variance_linear, variance_u,
    Estimator, KernelParams, LambdaGrid, PipelineConfig, RngStream, SamplePair, SelectionResult,
};

use crate::config::{KernelHeuristic, RunConfig};
use crate::{HeaderMode, Method};

fn write_output(out: Option<&Path>, payload: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))?;
            file.write_all(payload.as_bytes())
                .with_context(|| format!("cannot write {}", path.display()))?;
            file.write_all(b"\n")?;
        }
        None => println!("{payload}"),
    }
    Ok(())
}

fn sniff_header(path: &Path) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let first = text.lines().next().unwrap_or("");
    Ok(!first.split(',').all(|cell| cell.trim().parse::<f64>().is_ok()))
}

fn resolve_header(path: &Path, mode: HeaderMode) -> anyhow::Result<bool> {
    Ok(match mode {
        HeaderMode::Yes => true,
        HeaderMode::No => false,
        HeaderMode::Auto => sniff_header(path)?,
    })
}

fn load_pair(x: &Path, y: &Path, header: HeaderMode) -> anyhow::Result<SamplePair> {
    let (mx, names_x) = load_csv(x, resolve_header(x, header)?)
        .with_context(|| format!("loading {}", x.display()))?;
    let (my, _) = load_csv(y, resolve_header(y, header)?)
        .with_context(|| format!("loading {}", y.display()))?;
    Ok(SamplePair::new(mx, my, names_x)?)
}

fn lengthscales_for(pair: &SamplePair, heuristic: KernelHeuristic) -> anyhow::Result<Vec<f64>> {
    Ok(match heuristic {
        KernelHeuristic::Median => median_lengthscales(pair)?,
        KernelHeuristic::Mean => mean_lengthscales(pair)?,
    })
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TruthFile {
    ground_truth: Vec<usize>,
}

pub fn synth(setting: &str, dim: usize, rho: f64, n: usize, seed: u64, out: &Path) -> anyhow::Result<()> {
    let kind: SettingKind = setting.parse()?;
    let spec = SyntheticSetting { kind, dim, rho, n, seed: RngStream::new(seed) };
    let (pair, truth) = generate(&spec)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    save_csv(&out.join("X.csv"), pair.x(), Some(pair.column_names()))?;
    save_csv(&out.join("Y.csv"), pair.y(), Some(pair.column_names()))?;
    let truth_json = serde_json::to_string_pretty(&TruthFile { ground_truth: truth })?;
    write_output(Some(&out.join("truth.json")), &truth_json)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SelectedBlock {
    indices: Vec<usize>,
    names: Vec<String>,
}

#[derive(Serialize)]
struct PerLambdaEntry {
    lambda: f64,
    split: usize,
    objective_val: f64,
    p_value: f64,
    selected: Vec<usize>,
    weights: Vec<f64>,
    normalized_weights: Vec<f64>,
}

#[derive(Serialize)]
struct SelectReport<'a> {
    method: &'a str,
    config: &'a RunConfig,
    selected: SelectedBlock,
    score_vector: Option<Vec<f64>>,
    chosen_lambda: Option<f64>,
    fallback_used: bool,
    per_lambda: Vec<PerLambdaEntry>,
    wall_time_seconds: f64,
}

fn report_from(result: &SelectionResult, pair: &SamplePair) -> (SelectedBlock, Vec<PerLambdaEntry>) {
    let names = result
        .selected
        .iter()
        .map(|&d| pair.column_names()[d].clone())
        .collect();
    let per_lambda = result
        .diagnostics
        .iter()
        .map(|d| PerLambdaEntry {
            lambda: d.lambda,
            split: d.split,
            objective_val: d.objective_val,
            p_value: d.p_value,
            selected: d.selected.clone(),
            weights: d.weights.clone(),
            normalized_weights: d.normalized_weights.clone(),
        })
        .collect();
    (SelectedBlock { indices: result.selected.clone(), names }, per_lambda)
}

/// Runs one method on a pair. Streams: grid search uses child 1, the
/// selection procedure child 2, baselines child 3.
pub fn run_method(pair: &SamplePair, method: Method, cfg: &RunConfig, master: &RngStream) -> anyhow::Result<SelectionResult> {
    let scales = lengthscales_for(pair, cfg.kernel_heuristic)?;
    let pipeline: PipelineConfig = cfg.pipeline(scales.clone());
    Ok(match method {
        Method::ModelSelection | Method::CvAggregation => {
            let grid: LambdaGrid = generate_lambda_grid(
                pair,
                &scales,
                &pipeline.objective,
                &pipeline.train,
                &cfg.grid(),
                &master.child(1),
            )?;
            match method {
                Method::ModelSelection => model_selection(pair, &grid, &pipeline, &master.child(2))?,
                _ => cv_aggregation(pair, &grid, &pipeline, &master.child(2))?,
            }
        }
        Method::MmdBaseline => mmd_baseline(pair, &pipeline, &master.child(3))?,
        Method::LogisticBaseline => logistic_baseline(pair, &cfg.logistic(), &master.child(3))?,
    })
}

pub fn select(
    x: &Path,
    y: &Path,
    method: Method,
    header: HeaderMode,
    out: Option<&Path>,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let start = Instant::now();
    let pair = load_pair(x, y, header)?;
    let master = RngStream::new(cfg.seed);
    let result = run_method(&pair, method, cfg, &master)?;
    let (selected, per_lambda) = report_from(&result, &pair);
    let report = SelectReport {
        method: method.name(),
        config: cfg,
        selected,
        score_vector: result.score_vector.clone(),
        chosen_lambda: result.chosen_lambda,
        fallback_used: result.fallback_used,
        per_lambda,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_output(out, &serde_json::to_string_pretty(&report)?)
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

#[derive(Serialize, Clone)]
struct RepetitionRow {
    repetition: usize,
    precision: f64,
    recall: f64,
    f_score: f64,
    selected: Vec<usize>,
    wall_time_seconds: f64,
}

#[derive(Serialize, Clone)]
struct ExperimentCell {
    setting: String,
    method: String,
    n: usize,
    dim: usize,
    rho: f64,
    mean_precision: f64,
    std_precision: f64,
    mean_recall: f64,
    std_recall: f64,
    mean_f_score: f64,
    std_f_score: f64,
    repetitions: Vec<RepetitionRow>,
}

#[derive(Serialize)]
struct ExperimentReport<'a> {
    config: &'a RunConfig,
    settings: Vec<String>,
    methods: Vec<String>,
    repetitions: usize,
    cells: Vec<ExperimentCell>,
    wall_time_seconds: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct CellTask {
    setting: SettingKind,
    method: Method,
    n: usize,
    setting_idx: usize,
    n_idx: usize,
    rep: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn experiment(
    settings: &[String],
    methods: &[Method],
    reps: usize,
    dim: usize,
    rho: f64,
    sizes: &[usize],
    jobs: usize,
    out: Option<&Path>,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let start = Instant::now();
    if settings.is_empty() || methods.is_empty() || reps == 0 || sizes.is_empty() {
        return Err(mmdvs_core::Error::InvalidConfig(
            "experiment needs at least one setting, method, sample size and repetition".into(),
        )
        .into());
    }
    let kinds: Vec<SettingKind> = settings
        .iter()
        .map(|s| s.parse::<SettingKind>().map_err(anyhow::Error::from))
        .collect::<anyhow::Result<_>>()?;

    let mut tasks = Vec::new();
    for (setting_idx, &setting) in kinds.iter().enumerate() {
        for &method in methods {
            for (n_idx, &n) in sizes.iter().enumerate() {
                for rep in 0..reps {
                    tasks.push(CellTask { setting, method, n, setting_idx, n_idx, rep });
                }
            }
        }
    }

    let master = RngStream::new(cfg.seed);
    let run_task = |task: &CellTask| -> anyhow::Result<RepetitionRow> {
        let t0 = Instant::now();
        // Data streams depend on (setting, n, rep) only, so every method
        // sees the same draw of every repetition.
        let data_stream = master
            .child(10)
            .child(task.setting_idx as u64)
            .child(task.n_idx as u64)
            .child(task.rep as u64);
        let spec = SyntheticSetting { kind: task.setting, dim, rho, n: task.n, seed: data_stream };
        let (pair, truth) = generate(&spec).with_context(|| {
            format!("generating {} n={} rep={}", task.setting.name(), task.n, task.rep)
        })?;
        let method_stream = data_stream.child(match task.method {
            Method::ModelSelection => 1,
            Method::CvAggregation => 2,
            Method::MmdBaseline => 3,
            Method::LogisticBaseline => 4,
        });
        let result = run_method(&pair, task.method, cfg, &method_stream).with_context(|| {
            format!(
                "running {} on {} n={} rep={}",
                task.method.name(),
                task.setting.name(),
                task.n,
                task.rep
            )
        })?;
        let metrics = evaluate(&result.selected, &truth);
        Ok(RepetitionRow {
            repetition: task.rep,
            precision: metrics.precision,
            recall: metrics.recall,
            f_score: metrics.f_score,
            selected: result.selected,
            wall_time_seconds: t0.elapsed().as_secs_f64(),
        })
    };

    // Fixed-size worker pool over a shared counter; results land at their
    // task index so output order never depends on scheduling.
    let results: Vec<Option<anyhow::Result<RepetitionRow>>> = {
        let slots: Vec<Mutex<Option<anyhow::Result<RepetitionRow>>>> =
            (0..tasks.len()).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = jobs.max(1).min(tasks.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= tasks.len() {
                        break;
                    }
                    let outcome = run_task(&tasks[idx]);
                    *slots[idx].lock().unwrap() = Some(outcome);
                });
            }
        });
        slots.into_iter().map(|s| s.into_inner().unwrap()).collect()
    };

    let mut rows = Vec::with_capacity(tasks.len());
    for (task, slot) in tasks.iter().zip(results) {
        let row = slot.expect("worker pool covered every task").with_context(|| {
            format!("cell ({}, {}, n={})", task.setting.name(), task.method.name(), task.n)
        })?;
        rows.push(row);
    }

    let mut cells = Vec::new();
    for &setting in &kinds {
        for &method in methods {
            for &n in sizes {
                let cell_rows: Vec<RepetitionRow> = tasks
                    .iter()
                    .zip(&rows)
                    .filter(|(t, _)| t.setting == setting && t.method == method && t.n == n)
                    .map(|(_, r)| r.clone())
                    .collect();
                let (mean_precision, std_precision) =
                    mean_std(&cell_rows.iter().map(|r| r.precision).collect::<Vec<_>>());
                let (mean_recall, std_recall) =
                    mean_std(&cell_rows.iter().map(|r| r.recall).collect::<Vec<_>>());
                let (mean_f_score, std_f_score) =
                    mean_std(&cell_rows.iter().map(|r| r.f_score).collect::<Vec<_>>());
                cells.push(ExperimentCell {
                    setting: setting.name().to_string(),
                    method: method.name().to_string(),
                    n,
                    dim,
                    rho,
                    mean_precision,
                    std_precision,
                    mean_recall,
                    std_recall,
                    mean_f_score,
                    std_f_score,
                    repetitions: cell_rows,
                });
            }
        }
    }

    let report = ExperimentReport {
        config: cfg,
        settings: settings.to_vec(),
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        repetitions: reps,
        cells,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_output(out, &serde_json::to_string_pretty(&report)?)
}

// ---------------------------------------------------------------------------
// lengthscales / mmd
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct LengthscalesReport {
    heuristic: KernelHeuristic,
    names: Vec<String>,
    lengthscales: Vec<f64>,
}

pub fn lengthscales(
    x: &Path,
    y: &Path,
    header: HeaderMode,
    heuristic: KernelHeuristic,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let pair = load_pair(x, y, header)?;
    let scales = lengthscales_for(&pair, heuristic)?;
    let report = LengthscalesReport {
        heuristic,
        names: pair.column_names().to_vec(),
        lengthscales: scales,
    };
    write_output(out, &serde_json::to_string_pretty(&report)?)
}

#[derive(Serialize)]
struct MmdReport<'a> {
    config: &'a RunConfig,
    rows_used: usize,
    weights: Vec<f64>,
    lengthscales: Vec<f64>,
    mmd: f64,
    variance: f64,
    objective: f64,
}

pub fn mmd_values(
    x: &Path,
    y: &Path,
    header: HeaderMode,
    weights: Option<&[f64]>,
    out: Option<&Path>,
    cfg: &RunConfig,
) -> anyhow::Result<()> {
    let pair = load_pair(x, y, header)?;
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != pair.dim() {
                return Err(mmdvs_core::Error::DimensionMismatch(format!(
                    "{} weights supplied for {} variables",
                    w.len(),
                    pair.dim()
                ))
                .into());
            }
            w.to_vec()
        }
        None => vec![1.0; pair.dim()],
    };
    let scales = lengthscales_for(&pair, cfg.kernel_heuristic)?;
    let params = KernelParams::new(weights.clone(), scales.clone())?;
    // Variance estimators need equal sizes; apply the truncation policy.
    let pair_eq = mmdvs_core::data::equalize_rows(&pair, &RngStream::new(cfg.seed));
    let objective_cfg = cfg.objective();
    let (mmd, variance) = match cfg.estimator {
        Estimator::Quadratic => (mmd_u(&pair_eq, &params)?, variance_u(&pair_eq, &params)?),
        Estimator::Linear => (mmd_linear(&pair_eq, &params)?, variance_linear(&pair_eq, &params)?),
    };
    let objective = objective_value(&pair_eq, &params, &objective_cfg)?;
    let report = MmdReport {
        config: cfg,
        rows_used: pair_eq.n(),
        weights,
        lengthscales: scales,
        mmd,
        variance,
        objective,
    };
    write_output(out, &serde_json::to_string_pretty(&report)?)
}
