//! MMD estimators, variance estimators, the ratio objective, the
//! regularised losses and their analytic gradients with respect to the
//! ARD weights.
//!
//! Public estimator functions are straightforward reference computations.
//! Training uses [`QuadEvaluator`]/[`LinearEvaluator`] (crate-private),
//! which share kernel blocks between the loss and its gradient and batch
//! the exponentials; the public [`regularized_loss`] is a thin wrapper over
//! them.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::kernel::KernelParams;

/// Which data term drives the regularised loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `MMD^2 / sqrt(V + C)`, the test-power proxy.
    #[default]
    Ratio,
    /// The plain MMD estimate.
    MmdOnly,
}

/// Which MMD estimator backs the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// The `O(n^2)` unbiased U-statistic.
    #[default]
    Quadratic,
    /// The `O(n)` linear-time estimator.
    Linear,
}

/// Numerical knobs of the objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// The stabiliser C added under the square root of the ratio.
    pub c_stabilizer: f64,
    /// Clamp for the logarithm argument; the unbiased MMD can be negative.
    pub log_floor: f64,
    pub kind: ObjectiveKind,
    pub estimator: Estimator,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            c_stabilizer: 1e-8,
            log_floor: 1e-12,
            kind: ObjectiveKind::Ratio,
            estimator: Estimator::Quadratic,
        }
    }
}

/// A loss value and its gradient with respect to the ARD weights.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_pair_dims(pair: &SamplePair, params: &KernelParams) -> Result<()> {
    if pair.dim() != params.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data with {} variables against {} kernel parameters",
            pair.dim(),
            params.dim()
        )));
    }
    Ok(())
}

fn require_equal_sizes(pair: &SamplePair) -> Result<usize> {
    if pair.n() != pair.m() {
        return Err(Error::UnequalSampleSizes { n: pair.n(), m: pair.m() });
    }
    Ok(pair.n())
}

#[inline]
fn kernel_arg(a: &[f64], b: &[f64], coeff: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..coeff.len() {
        let diff = a[d] - b[d];
        s += coeff[d] * diff * diff;
    }
    -s
}

fn row_slices(m: &Array2<f64>) -> Vec<&[f64]> {
    m.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect()
}

/// Deterministic total order on matrices so that symmetric statistics can
/// pick a canonical argument order and stay bit-exact under swaps.
fn lex_le(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    match (a.nrows(), a.ncols()).cmp(&(b.nrows(), b.ncols())) {
        std::cmp::Ordering::Less => return true,
        std::cmp::Ordering::Greater => return false,
        std::cmp::Ordering::Equal => {}
    }
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Sum of off-diagonal kernel values within one dataset.
fn within_sum(rows: &[&[f64]], coeff: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..rows.len() {
        let mut row_acc = 0.0;
        for j in i + 1..rows.len() {
            row_acc += kernel_arg(rows[i], rows[j], coeff).exp();
        }
        total += row_acc;
    }
    2.0 * total
}

/// Sum of kernel values across two datasets, accumulated in an order that
/// does not depend on which argument came first.
fn cross_sum(a: &Array2<f64>, b: &Array2<f64>, coeff: &[f64]) -> f64 {
    let (first, second) = if lex_le(a, b) { (a, b) } else { (b, a) };
    let fr = row_slices(first);
    let sr = row_slices(second);
    let mut total = 0.0;
    for ri in &fr {
        let mut row_acc = 0.0;
        for rj in &sr {
            row_acc += kernel_arg(ri, rj, coeff).exp();
        }
        total += row_acc;
    }
    total
}

/// The unbiased quadratic-time MMD estimate. May be negative; exactly
/// symmetric under swapping the two datasets.
pub fn mmd_u(pair: &SamplePair, params: &KernelParams) -> Result<f64> {
    check_pair_dims(pair, params)?;
    let coeff = params.exponent_coefficients();
    let x = pair.x().as_standard_layout().to_owned();
    let y = pair.y().as_standard_layout().to_owned();
    let n = x.nrows() as f64;
    let m = y.nrows() as f64;
    let s_x = within_sum(&row_slices(&x), &coeff) / (n * (n - 1.0));
    let s_y = within_sum(&row_slices(&y), &coeff) / (m * (m - 1.0));
    let cross = cross_sum(&x, &y, &coeff) / (n * m);
    Ok((s_x + s_y) - 2.0 * cross)
}

/// Row sums and total of the H matrix,
/// `H_ij = k(X_i,X_j) + k(Y_i,Y_j) - k(X_i,Y_j) - k(Y_i,X_j)`, without
/// materialising any kernel block.
fn h_row_sums(x: &Array2<f64>, y: &Array2<f64>, coeff: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    let xr = row_slices(x);
    let yr = row_slices(y);
    let mut rows = vec![0.0f64; n];
    let mut xy_col = vec![0.0f64; n];
    let mut xy_row = vec![0.0f64; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += kernel_arg(xr[i], xr[j], coeff).exp();
            acc += kernel_arg(yr[i], yr[j], coeff).exp();
            let kxy = kernel_arg(xr[i], yr[j], coeff).exp();
            xy_col[j] += kxy;
            acc -= kxy;
        }
        xy_row[i] = acc;
    }
    for i in 0..n {
        rows[i] = xy_row[i] - xy_col[i];
    }
    rows
}

/// The unbiased variance estimate of the quadratic MMD for `n = m`.
/// Always nonnegative.
pub fn variance_u(pair: &SamplePair, params: &KernelParams) -> Result<f64> {
    check_pair_dims(pair, params)?;
    let n = require_equal_sizes(pair)?;
    let coeff = params.exponent_coefficients();
    let x = pair.x().as_standard_layout().to_owned();
    let y = pair.y().as_standard_layout().to_owned();
    let rows = h_row_sums(&x, &y, &coeff);
    let nf = n as f64;
    let mean = rows.iter().sum::<f64>() / nf;
    // Centred form of 4/n^3 sum_i (sum_j H_ij)^2 - 4/n^4 (sum_ij H_ij)^2.
    let ss: f64 = rows.iter().map(|r| (r - mean) * (r - mean)).sum();
    Ok(4.0 / (nf * nf * nf) * ss)
}

/// The test-power proxy `MMD^2_U / sqrt(V + C)` on the quadratic estimator.
pub fn ratio_objective(pair: &SamplePair, params: &KernelParams, cfg: &ObjectiveConfig) -> Result<f64> {
    let m = mmd_u(pair, params)?;
    let v = variance_u(pair, params)?;
    Ok(m / (v + cfg.c_stabilizer).sqrt())
}

/// `h((X,Y),(X',Y')) = k(X,X') + k(Y,Y') - k(X,Y') - k(X',Y)` for one
/// block of the linear estimator.
fn h_term(xa: &[f64], xb: &[f64], ya: &[f64], yb: &[f64], coeff: &[f64]) -> f64 {
    kernel_arg(xa, xb, coeff).exp() + kernel_arg(ya, yb, coeff).exp()
        - kernel_arg(xa, yb, coeff).exp()
        - kernel_arg(xb, ya, coeff).exp()
}

/// The linear-time unbiased MMD estimate over consecutive row pairs,
/// truncated to the largest even prefix.
pub fn mmd_linear(pair: &SamplePair, params: &KernelParams) -> Result<f64> {
    check_pair_dims(pair, params)?;
    let n = require_equal_sizes(pair)?;
    if n < 2 {
        return Err(Error::InvalidData(format!("linear MMD estimator needs n >= 2, got {n}")));
    }
    let coeff = params.exponent_coefficients();
    let x = pair.x().as_standard_layout().to_owned();
    let y = pair.y().as_standard_layout().to_owned();
    let xr = row_slices(&x);
    let yr = row_slices(&y);
    let n_even = n - n % 2;
    let mut sum = 0.0;
    for block in 0..n_even / 2 {
        let (a, b) = (2 * block, 2 * block + 1);
        sum += h_term(xr[a], xr[b], yr[a], yr[b], &coeff);
    }
    Ok(2.0 / n_even as f64 * sum)
}

/// The unbiased variance estimate of the linear MMD over blocks of four
/// rows, truncated to the largest multiple-of-four prefix. Nonnegative.
pub fn variance_linear(pair: &SamplePair, params: &KernelParams) -> Result<f64> {
    check_pair_dims(pair, params)?;
    let n = require_equal_sizes(pair)?;
    if n < 4 {
        return Err(Error::InvalidData(format!(
            "linear MMD variance estimator needs n >= 4, got {n}"
        )));
    }
    let coeff = params.exponent_coefficients();
    let x = pair.x().as_standard_layout().to_owned();
    let y = pair.y().as_standard_layout().to_owned();
    let xr = row_slices(&x);
    let yr = row_slices(&y);
    let n4 = n - n % 4;
    let mut sum = 0.0;
    for block in 0..n4 / 4 {
        let base = 4 * block;
        let ha = h_term(xr[base], xr[base + 1], yr[base], yr[base + 1], &coeff);
        let hb = h_term(xr[base + 2], xr[base + 3], yr[base + 2], yr[base + 3], &coeff);
        sum += (ha - hb) * (ha - hb);
    }
    Ok(4.0 / n4 as f64 * sum)
}

/// The objective value `l` used for validation scoring, dispatched on the
/// configured kind and estimator.
pub fn objective_value(pair: &SamplePair, params: &KernelParams, cfg: &ObjectiveConfig) -> Result<f64> {
    match (cfg.kind, cfg.estimator) {
        (ObjectiveKind::Ratio, Estimator::Quadratic) => ratio_objective(pair, params, cfg),
        (ObjectiveKind::MmdOnly, Estimator::Quadratic) => mmd_u(pair, params),
        (ObjectiveKind::Ratio, Estimator::Linear) => {
            let m = mmd_linear(pair, params)?;
            let v = variance_linear(pair, params)?;
            Ok(m / (v + cfg.c_stabilizer).sqrt())
        }
        (ObjectiveKind::MmdOnly, Estimator::Linear) => mmd_linear(pair, params),
    }
}

/// The regularised loss `-log(max(l, floor)) + lambda * sum_d |a_d|` and
/// its analytic gradient. When the clamp is active the data-term gradient
/// vanishes and only the penalty subgradient remains; the subgradient of
/// `|a_d|` at zero is taken as zero.
pub fn regularized_loss(
    pair: &SamplePair,
    params: &KernelParams,
    lambda: f64,
    cfg: &ObjectiveConfig,
) -> Result<LossAndGrad> {
    if !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be finite, got {lambda}")));
    }
    check_pair_dims(pair, params)?;
    require_equal_sizes(pair)?;
    match cfg.estimator {
        Estimator::Quadratic => {
            let eval = QuadEvaluator::new(pair, &params.length_scales)?;
            let fwd = eval.forward(&params.ard_weights);
            Ok(LossAndGrad {
                loss: fwd.loss(&params.ard_weights, lambda, cfg),
                grad: eval.backward(&fwd, &params.ard_weights, lambda, cfg),
            })
        }
        Estimator::Linear => {
            let eval = LinearEvaluator::new(pair, &params.length_scales, cfg)?;
            let fwd = eval.forward(&params.ard_weights);
            Ok(LossAndGrad {
                loss: fwd.loss(&params.ard_weights, lambda, cfg),
                grad: eval.backward(&fwd, &params.ard_weights, lambda, cfg),
            })
        }
    }
}

fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn l1_subgradient(a: &[f64], lambda: f64, grad: &mut [f64]) {
    for (g, w) in grad.iter_mut().zip(a) {
        if *w > 0.0 {
            *g += lambda;
        } else if *w < 0.0 {
            *g -= lambda;
        }
    }
}

/// Data-term coefficients of the loss gradient: `d loss / d M` and
/// `d loss / d V` for the configured kind, or zeros when the log clamp
/// is active.
fn loss_coefficients(mmd: f64, var: f64, cfg: &ObjectiveConfig) -> (f64, f64) {
    match cfg.kind {
        ObjectiveKind::Ratio => {
            let denom = var + cfg.c_stabilizer;
            let ratio = mmd / denom.sqrt();
            if ratio > cfg.log_floor {
                (-1.0 / mmd, 0.5 / denom)
            } else {
                (0.0, 0.0)
            }
        }
        ObjectiveKind::MmdOnly => {
            if mmd > cfg.log_floor {
                (-1.0 / mmd, 0.0)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

fn data_loss(mmd: f64, var: f64, cfg: &ObjectiveConfig) -> f64 {
    let value = match cfg.kind {
        ObjectiveKind::Ratio => mmd / (var + cfg.c_stabilizer).sqrt(),
        ObjectiveKind::MmdOnly => mmd,
    };
    -value.max(cfg.log_floor).ln()
}

// ---------------------------------------------------------------------------
// Fused quadratic evaluator used by the training loop.
// ---------------------------------------------------------------------------

/// Precomputed view of an `n = m` pair for repeated loss/gradient
/// evaluation at different ARD weights.
pub(crate) struct QuadEvaluator {
    x: Array2<f64>,
    y: Array2<f64>,
    /// `1 / (D * gamma_d^2)` per variable.
    inv_dg2: Vec<f64>,
    n: usize,
}

/// Kernel blocks and summary statistics at one weight vector. `kxy[i*n+j]`
/// holds `k(X_i, Y_j)`; the within blocks store full symmetric matrices.
pub(crate) struct QuadForward {
    kxx: Vec<f64>,
    kyy: Vec<f64>,
    kxy: Vec<f64>,
    h_rows: Vec<f64>,
    pub mmd: f64,
    pub var: f64,
}

impl QuadEvaluator {
    pub(crate) fn new(pair: &SamplePair, length_scales: &[f64]) -> Result<Self> {
        let n = require_equal_sizes(pair)?;
        if length_scales.len() != pair.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} length scales for {} variables",
                length_scales.len(),
                pair.dim()
            )));
        }
        let d = pair.dim() as f64;
        Ok(Self {
            x: pair.x().as_standard_layout().to_owned(),
            y: pair.y().as_standard_layout().to_owned(),
            inv_dg2: length_scales.iter().map(|g| 1.0 / (d * g * g)).collect(),
            n,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.inv_dg2.len()
    }

    fn coefficients(&self, weights: &[f64]) -> Vec<f64> {
        weights.iter().zip(&self.inv_dg2).map(|(a, c)| a * a * c).collect()
    }

    /// Fills a full symmetric kernel block for rows of one dataset.
    fn symmetric_block(rows: &[&[f64]], coeff: &[f64], out: &mut [f64]) {
        let n = rows.len();
        for i in 0..n {
            out[i * n + i] = 0.0;
            for j in i + 1..n {
                out[i * n + j] = kernel_arg(rows[i], rows[j], coeff);
            }
            fastexp::exp_slice(&mut out[i * n + i..(i + 1) * n]);
        }
        for i in 0..n {
            for j in i + 1..n {
                out[j * n + i] = out[i * n + j];
            }
        }
    }

    pub(crate) fn forward(&self, weights: &[f64]) -> QuadForward {
        let n = self.n;
        let coeff = self.coefficients(weights);
        let xr = row_slices(&self.x);
        let yr = row_slices(&self.y);

        let mut kxx = vec![0.0f64; n * n];
        let mut kyy = vec![0.0f64; n * n];
        let mut kxy = vec![0.0f64; n * n];
        Self::symmetric_block(&xr, &coeff, &mut kxx);
        Self::symmetric_block(&yr, &coeff, &mut kyy);
        for i in 0..n {
            for j in 0..n {
                kxy[i * n + j] = kernel_arg(xr[i], yr[j], &coeff);
            }
            fastexp::exp_slice(&mut kxy[i * n..(i + 1) * n]);
        }

        let mut sum_xx_off = 0.0;
        let mut sum_yy_off = 0.0;
        let mut sum_xy = 0.0;
        let mut h_rows = vec![0.0f64; n];
        let mut xy_cols = vec![0.0f64; n];
        for i in 0..n {
            let mut rx = 0.0;
            let mut ry = 0.0;
            let mut rxy = 0.0;
            for j in 0..n {
                rx += kxx[i * n + j];
                ry += kyy[i * n + j];
                let k = kxy[i * n + j];
                rxy += k;
                xy_cols[j] += k;
            }
            // Diagonals of the within blocks are exactly 1.
            sum_xx_off += rx - 1.0;
            sum_yy_off += ry - 1.0;
            sum_xy += rxy;
            h_rows[i] = rx + ry - rxy;
        }
        for i in 0..n {
            h_rows[i] -= xy_cols[i];
        }

        let nf = n as f64;
        let mmd = (sum_xx_off + sum_yy_off) / (nf * (nf - 1.0)) - 2.0 * sum_xy / (nf * nf);
        let mean = h_rows.iter().sum::<f64>() / nf;
        let ss: f64 = h_rows.iter().map(|r| (r - mean) * (r - mean)).sum();
        let var = 4.0 / (nf * nf * nf) * ss;

        QuadForward { kxx, kyy, kxy, h_rows, mmd, var }
    }

    /// Loss-only pass; skips kernel block storage. The within blocks are
    /// symmetric, so only their upper triangles are evaluated.
    pub(crate) fn forward_loss(&self, weights: &[f64], lambda: f64, cfg: &ObjectiveConfig) -> f64 {
        let n = self.n;
        let coeff = self.coefficients(weights);
        let xr = row_slices(&self.x);
        let yr = row_slices(&self.y);
        let mut buf = vec![0.0f64; n];
        let mut rxx = vec![1.0f64; n];
        let mut ryy = vec![1.0f64; n];
        let mut xy_rows = vec![0.0f64; n];
        let mut xy_cols = vec![0.0f64; n];
        for i in 0..n {
            let upper = n - i - 1;
            for j in i + 1..n {
                buf[j - i - 1] = kernel_arg(xr[i], xr[j], coeff.as_slice());
            }
            fastexp::exp_slice(&mut buf[..upper]);
            for j in i + 1..n {
                let v = buf[j - i - 1];
                rxx[i] += v;
                rxx[j] += v;
            }
            for j in i + 1..n {
                buf[j - i - 1] = kernel_arg(yr[i], yr[j], coeff.as_slice());
            }
            fastexp::exp_slice(&mut buf[..upper]);
            for j in i + 1..n {
                let v = buf[j - i - 1];
                ryy[i] += v;
                ryy[j] += v;
            }
            for j in 0..n {
                buf[j] = kernel_arg(xr[i], yr[j], coeff.as_slice());
            }
            fastexp::exp_slice(&mut buf);
            let mut rxy = 0.0;
            for j in 0..n {
                rxy += buf[j];
                xy_cols[j] += buf[j];
            }
            xy_rows[i] = rxy;
        }
        let mut sum_xx_off = 0.0;
        let mut sum_yy_off = 0.0;
        let mut sum_xy = 0.0;
        let mut h_rows = vec![0.0f64; n];
        for i in 0..n {
            sum_xx_off += rxx[i] - 1.0;
            sum_yy_off += ryy[i] - 1.0;
            sum_xy += xy_rows[i];
            h_rows[i] = rxx[i] + ryy[i] - xy_rows[i] - xy_cols[i];
        }
        let nf = n as f64;
        let mmd = (sum_xx_off + sum_yy_off) / (nf * (nf - 1.0)) - 2.0 * sum_xy / (nf * nf);
        let mean = h_rows.iter().sum::<f64>() / nf;
        let ss: f64 = h_rows.iter().map(|r| (r - mean) * (r - mean)).sum();
        let var = 4.0 / (nf * nf * nf) * ss;
        data_loss(mmd, var, cfg) + lambda * l1_norm(weights)
    }

    pub(crate) fn backward(
        &self,
        fwd: &QuadForward,
        weights: &[f64],
        lambda: f64,
        cfg: &ObjectiveConfig,
    ) -> Vec<f64> {
        let n = self.n;
        let nf = n as f64;
        let dim = self.dim();
        let (c_m, c_v) = loss_coefficients(fwd.mmd, fwd.var, cfg);
        let mut grad = vec![0.0f64; dim];
        if c_m != 0.0 || c_v != 0.0 {
            let total: f64 = fwd.h_rows.iter().sum();
            // dV/dH_ij depends on row i only.
            let g: Vec<f64> = fwd
                .h_rows
                .iter()
                .map(|r| 8.0 / (nf * nf * nf) * r - 8.0 / (nf * nf * nf * nf) * total)
                .collect();
            let w_m_within = c_m / (nf * (nf - 1.0));
            let w_m_cross = -2.0 * c_m / (nf * nf);

            let xr = row_slices(&self.x);
            let yr = row_slices(&self.y);
            let mut acc = vec![0.0f64; dim];

            // Within blocks: the MMD weight is symmetric and dV weights
            // symmetrise to (g_i + g_j)/2; diagonals contribute nothing
            // because the coordinate differences vanish.
            for i in 0..n {
                for j in i + 1..n {
                    let u = 2.0 * w_m_within + c_v * (g[i] + g[j]);
                    let txx = u * fwd.kxx[i * n + j];
                    let tyy = u * fwd.kyy[i * n + j];
                    let (xi, xj) = (xr[i], xr[j]);
                    let (yi, yj) = (yr[i], yr[j]);
                    for d in 0..dim {
                        let dx = xi[d] - xj[d];
                        let dy = yi[d] - yj[d];
                        acc[d] += txx * dx * dx + tyy * dy * dy;
                    }
                }
            }
            // Cross block: k(X_i, Y_j) appears in H_ij and (transposed) in H_ji.
            for i in 0..n {
                let xi = xr[i];
                for j in 0..n {
                    let u = w_m_cross - c_v * (g[i] + g[j]);
                    let t = u * fwd.kxy[i * n + j];
                    let yj = yr[j];
                    for d in 0..dim {
                        let dv = xi[d] - yj[d];
                        acc[d] += t * dv * dv;
                    }
                }
            }
            for d in 0..dim {
                grad[d] = -2.0 * weights[d] * self.inv_dg2[d] * acc[d];
            }
        }
        l1_subgradient(weights, lambda, &mut grad);
        grad
    }
}

impl QuadForward {
    pub(crate) fn loss(&self, weights: &[f64], lambda: f64, cfg: &ObjectiveConfig) -> f64 {
        data_loss(self.mmd, self.var, cfg) + lambda * l1_norm(weights)
    }
}

// ---------------------------------------------------------------------------
// Linear-estimator evaluator.
// ---------------------------------------------------------------------------

pub(crate) struct LinearEvaluator {
    x: Array2<f64>,
    y: Array2<f64>,
    inv_dg2: Vec<f64>,
    n_even: usize,
    n_four: usize,
}

pub(crate) struct LinearForward {
    /// Per-block `h` values and the four kernel values of each block.
    h: Vec<f64>,
    kernels: Vec<[f64; 4]>,
    pub mmd: f64,
    pub var: f64,
}

impl LinearEvaluator {
    pub(crate) fn new(pair: &SamplePair, length_scales: &[f64], cfg: &ObjectiveConfig) -> Result<Self> {
        let n = require_equal_sizes(pair)?;
        if length_scales.len() != pair.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} length scales for {} variables",
                length_scales.len(),
                pair.dim()
            )));
        }
        let n_even = n - n % 2;
        let n_four = n - n % 4;
        if n_even < 2 {
            return Err(Error::InvalidData(format!("linear estimator needs n >= 2, got {n}")));
        }
        if cfg.kind == ObjectiveKind::Ratio && n_four < 4 {
            return Err(Error::InvalidData(format!(
                "linear ratio objective needs n >= 4 for its variance estimate, got {n}"
            )));
        }
        let d = pair.dim() as f64;
        Ok(Self {
            x: pair.x().as_standard_layout().to_owned(),
            y: pair.y().as_standard_layout().to_owned(),
            inv_dg2: length_scales.iter().map(|g| 1.0 / (d * g * g)).collect(),
            n_even,
            n_four,
        })
    }

    fn coefficients(&self, weights: &[f64]) -> Vec<f64> {
        weights.iter().zip(&self.inv_dg2).map(|(a, c)| a * a * c).collect()
    }

    pub(crate) fn forward(&self, weights: &[f64]) -> LinearForward {
        let coeff = self.coefficients(weights);
        let xr = row_slices(&self.x);
        let yr = row_slices(&self.y);
        let blocks = self.n_even / 2;
        let mut h = Vec::with_capacity(blocks);
        let mut kernels = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let (a, c) = (2 * b, 2 * b + 1);
            let k1 = kernel_arg(xr[a], xr[c], &coeff).exp();
            let k2 = kernel_arg(yr[a], yr[c], &coeff).exp();
            let k3 = kernel_arg(xr[a], yr[c], &coeff).exp();
            let k4 = kernel_arg(xr[c], yr[a], &coeff).exp();
            kernels.push([k1, k2, k3, k4]);
            h.push(k1 + k2 - k3 - k4);
        }
        let mmd = 2.0 / self.n_even as f64 * h.iter().sum::<f64>();
        let var = if self.n_four >= 4 {
            let mut sum = 0.0;
            for l in 0..self.n_four / 4 {
                let diff = h[2 * l] - h[2 * l + 1];
                sum += diff * diff;
            }
            4.0 / self.n_four as f64 * sum
        } else {
            f64::NAN
        };
        LinearForward { h, kernels, mmd, var }
    }

    pub(crate) fn forward_loss(&self, weights: &[f64], lambda: f64, cfg: &ObjectiveConfig) -> f64 {
        self.forward(weights).loss(weights, lambda, cfg)
    }

    pub(crate) fn backward(
        &self,
        fwd: &LinearForward,
        weights: &[f64],
        lambda: f64,
        cfg: &ObjectiveConfig,
    ) -> Vec<f64> {
        let dim = self.inv_dg2.len();
        let (c_m, c_v) = loss_coefficients(fwd.mmd, fwd.var, cfg);
        let mut grad = vec![0.0f64; dim];
        if c_m != 0.0 || c_v != 0.0 {
            let xr = row_slices(&self.x);
            let yr = row_slices(&self.y);
            let mut acc = vec![0.0f64; dim];
            let m_weight = c_m * 2.0 / self.n_even as f64;
            for (b, hk) in fwd.kernels.iter().enumerate() {
                let mut w = m_weight;
                // Blocks below n_four/2 also feed the variance term, with
                // alternating sign inside each pair of blocks.
                if c_v != 0.0 && b < self.n_four / 2 {
                    let l = b / 2;
                    let diff = fwd.h[2 * l] - fwd.h[2 * l + 1];
                    let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                    w += c_v * 8.0 / self.n_four as f64 * diff * sign;
                }
                let (a, c) = (2 * b, 2 * b + 1);
                let (xa, xc, ya, yc) = (xr[a], xr[c], yr[a], yr[c]);
                for d in 0..dim {
                    let d1 = xa[d] - xc[d];
                    let d2 = ya[d] - yc[d];
                    let d3 = xa[d] - yc[d];
                    let d4 = xc[d] - ya[d];
                    acc[d] += w * (hk[0] * d1 * d1 + hk[1] * d2 * d2 - hk[2] * d3 * d3 - hk[3] * d4 * d4);
                }
            }
            for d in 0..dim {
                grad[d] = -2.0 * weights[d] * self.inv_dg2[d] * acc[d];
            }
        }
        l1_subgradient(weights, lambda, &mut grad);
        grad
    }
}

impl LinearForward {
    pub(crate) fn loss(&self, weights: &[f64], lambda: f64, cfg: &ObjectiveConfig) -> f64 {
        data_loss(self.mmd, self.var, cfg) + lambda * l1_norm(weights)
    }
}

// ---------------------------------------------------------------------------
// Batched exponential.
// ---------------------------------------------------------------------------

/// Vectorisable `exp` for the kernel's nonpositive exponents. Rational
/// minimax approximation after Cody-Waite range reduction, accurate to a
/// couple of ulps; arguments below the underflow threshold map to zero.
pub(crate) mod fastexp {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_457_519_531_25e-1;
    const LN2_LO: f64 = 1.428_606_820_309_417_2e-6;
    const P0: f64 = 1.261_771_930_748_105_9e-4;
    const P1: f64 = 3.029_944_077_074_419_6e-2;
    const P2: f64 = 9.999_999_999_999_999_9e-1;
    const Q0: f64 = 3.001_985_051_386_644_6e-6;
    const Q1: f64 = 2.524_483_403_496_841e-3;
    const Q2: f64 = 2.272_655_482_081_550_3e-1;
    const Q3: f64 = 2.000_000_000_000_000_0;

    #[inline]
    pub(crate) fn exp_neg(x: f64) -> f64 {
        if x < -708.0 {
            return 0.0;
        }
        if x > 0.0 {
            return x.exp();
        }
        let k = (LOG2E * x + 0.5).floor();
        let r = (x - k * LN2_HI) - k * LN2_LO;
        let rr = r * r;
        let px = r * ((P0 * rr + P1) * rr + P2);
        let q = ((Q0 * rr + Q1) * rr + Q2) * rr + Q3;
        let e = px / (q - px);
        let value = 1.0 + 2.0 * e;
        let scale = f64::from_bits(((1023 + k as i64) as u64) << 52);
        value * scale
    }

    pub(crate) fn exp_slice(xs: &mut [f64]) {
        for v in xs.iter_mut() {
            *v = exp_neg(*v);
        }
    }

}
