//! Gradient-based training of the ARD weights: Adam with a
//! plateau-reducing learning-rate schedule and window-based early stopping.

use serde::{Deserialize, Serialize};

use crate::data::{equalize_rows, RngStream, SamplePair};
use crate::error::{Error, Result};
use crate::mmd::{Estimator, LinearEvaluator, ObjectiveConfig, QuadEvaluator};

/// Training-loop configuration. Defaults: Adam from learning rate 0.01,
/// up to 99,999 epochs, stop once the last 100 train and validation losses
/// each span less than 0.001.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub max_epochs: usize,
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Minimum loss improvement that resets the plateau counter.
    pub plateau_threshold: f64,
    pub min_lr: f64,
    /// Rows drawn per dataset each epoch; absent means full batch.
    /// The default trains on modest random row subsets: the test-power
    /// ratio's variance estimate is statistically fragile, and full-batch
    /// gradients let the weights overfit it.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.01,
            max_epochs: 99_999,
            early_stop_window: 100,
            early_stop_tol: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            plateau_patience: 10,
            plateau_factor: 0.5,
            plateau_threshold: 1e-4,
            min_lr: 0.0,
            batch_size: Some(25),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) {
            return Err(Error::InvalidConfig("initial_lr must be > 0".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::InvalidConfig("plateau_factor must lie in (0,1)".into()));
        }
        if self.early_stop_window < 2 {
            return Err(Error::InvalidConfig("early_stop_window must be >= 2".into()));
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainResult {
    /// Final ARD weights (signed; the kernel only sees their squares).
    pub weights: Vec<f64>,
    pub train_loss_trace: Vec<f64>,
    pub val_loss_trace: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Bias-corrected two-moment Adam state.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }
}

/// One Adam update in place.
pub fn adam_step(state: &mut AdamState, weights: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
    state.t += 1;
    let b1 = cfg.adam_beta1;
    let b2 = cfg.adam_beta2;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for d in 0..weights.len() {
        state.m[d] = b1 * state.m[d] + (1.0 - b1) * grad[d];
        state.v[d] = b2 * state.v[d] + (1.0 - b2) * grad[d] * grad[d];
        let m_hat = state.m[d] / bc1;
        let v_hat = state.v[d] / bc2;
        weights[d] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

enum Evaluator {
    Quad(QuadEvaluator),
    Linear(LinearEvaluator),
}

enum ForwardState {
    Quad(crate::mmd::QuadForward),
    Linear(crate::mmd::LinearForward),
}

impl Evaluator {
    fn new(pair: &SamplePair, lengthscales: &[f64], obj: &ObjectiveConfig) -> Result<Self> {
        Ok(match obj.estimator {
            Estimator::Quadratic => Evaluator::Quad(QuadEvaluator::new(pair, lengthscales)?),
            Estimator::Linear => Evaluator::Linear(LinearEvaluator::new(pair, lengthscales, obj)?),
        })
    }

    fn forward(&self, a: &[f64]) -> ForwardState {
        match self {
            Evaluator::Quad(e) => ForwardState::Quad(e.forward(a)),
            Evaluator::Linear(e) => ForwardState::Linear(e.forward(a)),
        }
    }

    fn loss_of(&self, fwd: &ForwardState, a: &[f64], lambda: f64, obj: &ObjectiveConfig) -> f64 {
        match fwd {
            ForwardState::Quad(f) => f.loss(a, lambda, obj),
            ForwardState::Linear(f) => f.loss(a, lambda, obj),
        }
    }

    fn backward(&self, fwd: &ForwardState, a: &[f64], lambda: f64, obj: &ObjectiveConfig) -> Vec<f64> {
        match (self, fwd) {
            (Evaluator::Quad(e), ForwardState::Quad(f)) => e.backward(f, a, lambda, obj),
            (Evaluator::Linear(e), ForwardState::Linear(f)) => e.backward(f, a, lambda, obj),
            _ => unreachable!("evaluator and forward state kinds always match"),
        }
    }

    fn loss_and_grad(&self, a: &[f64], lambda: f64, obj: &ObjectiveConfig) -> (f64, Vec<f64>) {
        let fwd = self.forward(a);
        (self.loss_of(&fwd, a, lambda, obj), self.backward(&fwd, a, lambda, obj))
    }

    fn loss(&self, a: &[f64], lambda: f64, obj: &ObjectiveConfig) -> f64 {
        match self {
            Evaluator::Quad(e) => e.forward_loss(a, lambda, obj),
            Evaluator::Linear(e) => e.forward_loss(a, lambda, obj),
        }
    }
}

fn window_range(trace: &[f64], window: usize) -> f64 {
    let tail = &trace[trace.len() - window..];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in tail {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

fn subsample(pair: &SamplePair, size: usize, rng: &mut rand_chacha::ChaCha8Rng) -> SamplePair {
    use rand::seq::SliceRandom;
    let mut pick = |total: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..total).collect();
        idx.shuffle(rng);
        idx.truncate(size.max(2).min(total));
        idx
    };
    let xi = pick(pair.n());
    let yi = pick(pair.m());
    SamplePair::new(
        pair.x().select(ndarray::Axis(0), &xi),
        pair.y().select(ndarray::Axis(0), &yi),
        Some(pair.column_names().to_vec()),
    )
    .expect("subsampling preserves pair invariants")
}

/// Minimises the regularised loss over the ARD weights, starting from the
/// all-ones vector. Returns the final weights and per-epoch post-step loss
/// traces on training and validation data.
///
/// When the two sides of a pair differ in size, both are shuffled by the
/// stream and truncated to the smaller count before optimisation.
pub fn train_ard(
    train: &SamplePair,
    val: &SamplePair,
    lengthscales: &[f64],
    lambda: f64,
    obj: &ObjectiveConfig,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<TrainResult> {
    train_ard_inner(train, Some(val), lengthscales, lambda, obj, cfg, rng)
}

/// As [`train_ard`] but with an optional validation pair; without one the
/// training trace doubles as the validation trace (used where a procedure
/// optimises on a full pair with no held-out data).
pub(crate) fn train_ard_inner(
    train: &SamplePair,
    val: Option<&SamplePair>,
    lengthscales: &[f64],
    lambda: f64,
    obj: &ObjectiveConfig,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<TrainResult> {
    cfg.validate()?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let train_eq = equalize_rows(train, &rng.child(0));
    let val_eq = val.map(|v| equalize_rows(v, &rng.child(1)));

    let dim = train_eq.dim();
    let full_eval = Evaluator::new(&train_eq, lengthscales, obj)?;
    let val_eval = match &val_eq {
        Some(v) => Some(Evaluator::new(v, lengthscales, obj)?),
        None => None,
    };
    let mut batch_rng = rng.child(2).rng();

    let mut weights = vec![1.0f64; dim];
    let mut adam = AdamState::new(dim);
    let mut lr = cfg.initial_lr;
    let mut train_trace: Vec<f64> = Vec::new();
    let mut val_trace: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut stopped_early = false;
    let mut epochs_run = 0usize;
    // In full-batch mode the post-step forward pass doubles as the next
    // epoch's gradient base.
    let mut cached_forward: Option<ForwardState> = None;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let grad = match cfg.batch_size {
            None => {
                let fwd = cached_forward.take().unwrap_or_else(|| full_eval.forward(&weights));
                full_eval.backward(&fwd, &weights, lambda, obj)
            }
            Some(size) => {
                let batch = subsample(&train_eq, size, &mut batch_rng);
                let eval = Evaluator::new(&batch, lengthscales, obj)?;
                eval.loss_and_grad(&weights, lambda, obj).1
            }
        };
        adam_step(&mut adam, &mut weights, &grad, lr, cfg);

        let train_loss = match cfg.batch_size {
            None => {
                let fwd = full_eval.forward(&weights);
                let loss = full_eval.loss_of(&fwd, &weights, lambda, obj);
                cached_forward = Some(fwd);
                loss
            }
            Some(_) => full_eval.loss(&weights, lambda, obj),
        };
        let val_loss = match &val_eval {
            Some(e) => e.loss(&weights, lambda, obj),
            None => train_loss,
        };
        if !train_loss.is_finite() || !val_loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, lr });
        }
        train_trace.push(train_loss);
        val_trace.push(val_loss);

        // Plateau schedule on the optimised (training) loss.
        if best - train_loss > cfg.plateau_threshold {
            best = train_loss;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= cfg.plateau_patience {
                lr = (lr * cfg.plateau_factor).max(cfg.min_lr);
                stagnant = 0;
            }
        }

        if epoch >= cfg.early_stop_window
            && window_range(&train_trace, cfg.early_stop_window) < cfg.early_stop_tol
            && window_range(&val_trace, cfg.early_stop_window) < cfg.early_stop_tol
        {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainResult {
        weights,
        train_loss_trace: train_trace,
        val_loss_trace: val_trace,
        epochs_run,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngStream;
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn adam_zero_gradient_keeps_weights() {
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(3);
        let mut w = vec![1.0, -0.5, 2.0];
        let before = w.clone();
        adam_step(&mut state, &mut w, &[0.0, 0.0, 0.0], 0.01, &cfg);
        assert_eq!(w, before);
    }

    #[test]
    fn adam_first_step_hand_computed() {
        // With bias correction, the first step is -lr * g / (|g| + eps).
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(2);
        let mut w = vec![1.0, 1.0];
        let g = [0.3, -2.0];
        adam_step(&mut state, &mut w, &g, 0.01, &cfg);
        for d in 0..2 {
            let expect = 1.0 - 0.01 * g[d] / (g[d].abs() + cfg.adam_eps);
            assert!((w[d] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_two_steps_match_reference_recurrence() {
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(1);
        let mut w = vec![0.5];
        let g = [0.7];
        adam_step(&mut state, &mut w, &g, 0.05, &cfg);
        adam_step(&mut state, &mut w, &g, 0.05, &cfg);
        // Scripted recurrence.
        let (b1, b2) = (0.9, 0.999);
        let mut m = 0.0;
        let mut v = 0.0;
        let mut wr = 0.5;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g[0];
            v = b2 * v + (1.0 - b2) * g[0] * g[0];
            let mh = m / (1.0 - b1f64_pow(b1, t));
            let vh = v / (1.0 - b1f64_pow(b2, t));
            wr -= 0.05 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((w[0] - wr).abs() < 1e-12);
    }

    fn b1f64_pow(b: f64, t: u32) -> f64 {
        b.powi(t as i32)
    }

    fn gaussian_pair(seed: u64, n: usize, d: usize, shift: f64) -> SamplePair {
        use rand_distr::StandardNormal;
        let mut rng = RngStream::new(seed).rng();
        let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array2::from_shape_fn((n, d), |(_, j)| {
            let v: f64 = rng.sample(StandardNormal);
            if j == 0 {
                v + shift
            } else {
                v
            }
        });
        SamplePair::new(x, y, None).unwrap()
    }

    #[test]
    fn huge_lambda_drives_weights_to_zero() {
        let pair = gaussian_pair(3, 30, 4, 1.0);
        let scales = crate::kernel::median_lengthscales(&pair).unwrap();
        let cfg = TrainConfig { max_epochs: 3000, ..Default::default() };
        let res = train_ard(
            &pair,
            &pair,
            &scales,
            1e6,
            &ObjectiveConfig::default(),
            &cfg,
            &RngStream::new(0),
        )
        .unwrap();
        let l1: f64 = res.weights.iter().map(|w| w.abs()).sum();
        assert!(l1 < 0.01, "l1 norm {l1}");
    }

    #[test]
    fn deterministic_given_seed() {
        let pair = gaussian_pair(5, 20, 3, 0.8);
        let scales = crate::kernel::median_lengthscales(&pair).unwrap();
        let cfg = TrainConfig { max_epochs: 200, ..Default::default() };
        let run = || {
            train_ard(&pair, &pair, &scales, 0.1, &ObjectiveConfig::default(), &cfg, &RngStream::new(9))
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.train_loss_trace, b.train_loss_trace);
        assert_eq!(a.epochs_run, b.epochs_run);
    }

    #[test]
    fn early_stop_after_full_window() {
        let pair = gaussian_pair(8, 15, 2, 0.0);
        let scales = crate::kernel::median_lengthscales(&pair).unwrap();
        let cfg = TrainConfig { early_stop_window: 20, max_epochs: 20000, ..Default::default() };
        let res = train_ard(
            &pair,
            &pair,
            &scales,
            0.5,
            &ObjectiveConfig::default(),
            &cfg,
            &RngStream::new(1),
        )
        .unwrap();
        if res.stopped_early {
            assert!(res.train_loss_trace.len() >= 20);
        }
    }

    #[test]
    fn unequal_sides_truncated() {
        let mut rng = RngStream::new(2).rng();
        let x = Array2::from_shape_fn((12, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((9, 2), |_| rng.random_range(-1.0..1.0));
        let pair = SamplePair::new(x, y, None).unwrap();
        let scales = crate::kernel::median_lengthscales(&pair).unwrap();
        let cfg = TrainConfig { max_epochs: 20, ..Default::default() };
        let res = train_ard(&pair, &pair, &scales, 0.1, &ObjectiveConfig::default(), &cfg, &RngStream::new(3));
        assert!(res.is_ok());
    }

    #[test]
    fn minibatch_runs_and_is_deterministic() {
        let pair = gaussian_pair(12, 40, 3, 0.6);
        let scales = crate::kernel::median_lengthscales(&pair).unwrap();
        let cfg = TrainConfig { max_epochs: 60, batch_size: Some(16), ..Default::default() };
        let run = || {
            train_ard(&pair, &pair, &scales, 0.1, &ObjectiveConfig::default(), &cfg, &RngStream::new(4))
                .unwrap()
        };
        assert_eq!(run().weights, run().weights);
    }
}
