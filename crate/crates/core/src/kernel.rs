//! ARD Gaussian kernel and variable-wise length-scale heuristics.
//!
//! The kernel is `k(x, y) = exp(-(1/D) * sum_d a_d^2 (x_d - y_d)^2 / gamma_d^2)`.
//! ARD weights are stored unconstrained; the kernel depends on `a_d^2` only,
//! so the sign of a weight never matters and reports expose `|a_d|`.

use ndarray::{Array2, ArrayView1};

use crate::data::SamplePair;
use crate::error::{Error, Result};

/// ARD weights and strictly positive per-variable length scales.
#[derive(Debug, Clone)]
pub struct KernelParams {
    pub ard_weights: Vec<f64>,
    pub length_scales: Vec<f64>,
}

impl KernelParams {
    pub fn new(ard_weights: Vec<f64>, length_scales: Vec<f64>) -> Result<Self> {
        if ard_weights.len() != length_scales.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights but {} length scales",
                ard_weights.len(),
                length_scales.len()
            )));
        }
        if ard_weights.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidData("ARD weights must be finite".into()));
        }
        if length_scales.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidData("length scales must be finite and > 0".into()));
        }
        Ok(Self { ard_weights, length_scales })
    }

    pub fn dim(&self) -> usize {
        self.ard_weights.len()
    }

    /// Per-variable exponent coefficients `a_d^2 / (D * gamma_d^2)`.
    pub(crate) fn exponent_coefficients(&self) -> Vec<f64> {
        let d = self.dim() as f64;
        self.ard_weights
            .iter()
            .zip(&self.length_scales)
            .map(|(a, g)| a * a / (d * g * g))
            .collect()
    }
}

#[inline]
fn weighted_sqdist(a: &[f64], b: &[f64], coeff: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..coeff.len() {
        let diff = a[d] - b[d];
        s += coeff[d] * diff * diff;
    }
    s
}

/// Kernel value for a single pair of vectors. Always in `(0, 1]`.
pub fn ard_kernel(x: ArrayView1<f64>, y: ArrayView1<f64>, params: &KernelParams) -> Result<f64> {
    if x.len() != params.dim() || y.len() != params.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {} against {} kernel parameters",
            x.len(),
            y.len(),
            params.dim()
        )));
    }
    let coeff = params.exponent_coefficients();
    let xs = x.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| x.to_vec());
    let ys = y.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| y.to_vec());
    Ok((-weighted_sqdist(&xs, &ys, &coeff)).exp())
}

/// Pairwise kernel matrix with entry `(i, j) = k(A_i, B_j)`.
pub fn gram_matrix(a: &Array2<f64>, b: &Array2<f64>, params: &KernelParams) -> Result<Array2<f64>> {
    if a.ncols() != params.dim() || b.ncols() != params.dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrices with {} and {} columns against {} kernel parameters",
            a.ncols(),
            b.ncols(),
            params.dim()
        )));
    }
    let coeff = params.exponent_coefficients();
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        let ra = ra.to_slice().expect("standard layout");
        for (j, rb) in b.rows().into_iter().enumerate() {
            let rb = rb.to_slice().expect("standard layout");
            out[[i, j]] = (-weighted_sqdist(ra, rb, &coeff)).exp();
        }
    }
    Ok(out)
}

/// Heuristic selector shared by the median and mean variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Heuristic {
    Median,
    Mean,
}

/// Median of a slice, destroying its order. Even counts average the two
/// middle order statistics.
fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    debug_assert!(len > 0);
    let upper = len / 2;
    let (_, &mut hi, _) = values.select_nth_unstable_by(upper, f64::total_cmp);
    if len % 2 == 1 {
        hi
    } else {
        let lo = values[..upper].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Squared length scale of one pooled column: median or mean of squared
/// pairwise differences over unordered pairs of distinct indices.
/// Duplicated values still count.
fn column_lengthscale_sq(pooled: &[f64], heuristic: Heuristic) -> f64 {
    let total = pooled.len();
    debug_assert!(total >= 2);
    let n_pairs = total * (total - 1) / 2;
    match heuristic {
        Heuristic::Median => {
            let mut diffs: Vec<f64> = Vec::with_capacity(n_pairs);
            for i in 0..total {
                let zi = pooled[i];
                for &zj in &pooled[i + 1..] {
                    let diff = zi - zj;
                    diffs.push(diff * diff);
                }
            }
            median_in_place(&mut diffs)
        }
        Heuristic::Mean => {
            let mut sum = 0.0;
            for i in 0..total {
                let zi = pooled[i];
                for &zj in &pooled[i + 1..] {
                    let diff = zi - zj;
                    sum += diff * diff;
                }
            }
            sum / n_pairs as f64
        }
    }
}

fn lengthscales_impl(pair: &SamplePair, heuristic: Heuristic) -> Result<Vec<f64>> {
    let d = pair.dim();
    let total = pair.n() + pair.m();
    if total < 2 {
        return Err(Error::InvalidData("need at least two pooled values per variable".into()));
    }
    let mut scales = vec![0.0f64; d];
    let mut pooled = vec![0.0f64; total];
    for v in 0..d {
        for (i, val) in pair.x().column(v).iter().enumerate() {
            pooled[i] = *val;
        }
        for (j, val) in pair.y().column(v).iter().enumerate() {
            pooled[pair.n() + j] = *val;
        }
        scales[v] = column_lengthscale_sq(&pooled, heuristic).sqrt();
    }
    // Minimum value replacement: zero scales take the smallest positive one.
    let gamma_min = scales.iter().copied().filter(|g| *g > 0.0).fold(f64::INFINITY, f64::min);
    if !gamma_min.is_finite() {
        let name = match heuristic {
            Heuristic::Median => "median",
            Heuristic::Mean => "mean",
        };
        let hint = match heuristic {
            Heuristic::Median => "try the variable-wise mean heuristic",
            Heuristic::Mean => "the data has no variation in any variable",
        };
        return Err(Error::DegenerateLengthScales(format!(
            "all per-variable {name} length scales are zero; {hint}"
        )));
    }
    for g in &mut scales {
        if *g == 0.0 {
            *g = gamma_min;
        }
    }
    Ok(scales)
}

/// Variable-wise median heuristic: `gamma_d^2` is the median of squared
/// pairwise differences of the pooled per-variable values, with zero
/// medians replaced by the smallest positive computed scale.
pub fn median_lengthscales(pair: &SamplePair) -> Result<Vec<f64>> {
    lengthscales_impl(pair, Heuristic::Median)
}

/// Variable-wise mean heuristic: as the median heuristic but with the
/// arithmetic mean of squared pairwise differences. Better suited to
/// sparse data where most pairwise differences are zero.
pub fn mean_lengthscales(pair: &SamplePair) -> Result<Vec<f64>> {
    lengthscales_impl(pair, Heuristic::Mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn params(a: Vec<f64>, g: Vec<f64>) -> KernelParams {
        KernelParams::new(a, g).unwrap()
    }

    #[test]
    fn zero_weights_give_one() {
        let p = params(vec![0.0, 0.0], vec![1.0, 2.0]);
        let x = array![1.5, -3.0];
        let y = array![40.0, 7.0];
        assert_eq!(ard_kernel(x.view(), y.view(), &p).unwrap(), 1.0);
    }

    #[test]
    fn equal_inputs_give_one() {
        let p = params(vec![2.0, -1.0], vec![0.5, 3.0]);
        let x = array![1.5, -3.0];
        assert_eq!(ard_kernel(x.view(), x.view(), &p).unwrap(), 1.0);
    }

    #[test]
    fn one_dimensional_hand_value() {
        let p = params(vec![1.0], vec![1.0]);
        let x = array![0.0];
        let y = array![1.0];
        let v = ard_kernel(x.view(), y.view(), &p).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gram_hand_values() {
        let a = array![[0.0], [1.0]];
        let b = array![[0.0]];
        let p = params(vec![1.0], vec![1.0]);
        let g = gram_matrix(&a, &b, &p).unwrap();
        assert_eq!(g[[0, 0]], 1.0);
        assert!((g[[1, 0]] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gram_symmetric_unit_diagonal() {
        let mut rng = crate::data::RngStream::new(11).rng();
        use rand::Rng;
        let a = Array2::from_shape_fn((6, 3), |_| rng.random_range(-2.0..2.0));
        let p = params(vec![0.7, 1.3, 0.1], vec![1.0, 0.4, 2.0]);
        let g = gram_matrix(&a, &a, &p).unwrap();
        for i in 0..6 {
            assert_eq!(g[[i, i]], 1.0);
            for j in 0..6 {
                assert_eq!(g[[i, j]], g[[j, i]]);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = params(vec![1.0], vec![1.0]);
        let x = array![0.0, 1.0];
        assert!(ard_kernel(x.view(), x.view(), &p).is_err());
        let a = array![[0.0, 1.0]];
        assert!(gram_matrix(&a, &a, &p).is_err());
    }

    #[test]
    fn gram_psd_on_random_matrices() {
        use rand::Rng;
        for seed in 0..5u64 {
            let mut rng = crate::data::RngStream::new(seed).rng();
            let n = rng.random_range(5..=50);
            let d = rng.random_range(1..=6);
            let a = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
            let weights: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
            let g = gram_matrix(&a, &a, &params(weights, scales)).unwrap();
            let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| g[[i, j]]);
            let eig = mat.symmetric_eigenvalues();
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8, "smallest eigenvalue {min} on seed {seed}");
        }
    }

    #[test]
    fn single_pair_lengthscale() {
        // L_d = {0, 1}: one pair, squared difference 1, either heuristic.
        assert_eq!(column_lengthscale_sq(&[0.0, 1.0], Heuristic::Median), 1.0);
        assert_eq!(column_lengthscale_sq(&[0.0, 1.0], Heuristic::Mean), 1.0);
    }

    #[test]
    fn mean_heuristic_worked_multiset() {
        // Pool {0,0,2,0,0,0}: squared diffs are ten 0s and five 4s,
        // so the mean is 20/15 = 1.33 and the median is 0.
        let pool = [0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
        assert!((column_lengthscale_sq(&pool, Heuristic::Mean) - 20.0 / 15.0).abs() < 1e-12);
        assert_eq!(column_lengthscale_sq(&pool, Heuristic::Median), 0.0);

        // Inside a pair the zero median triggers minimum-value replacement.
        let x = array![[0.0, 0.0], [0.0, 1.0], [2.0, 2.0]];
        let y = array![[0.0, 3.0], [0.0, 4.0], [0.0, 5.0]];
        let med = median_lengthscales(&SamplePair::new(x, y, None).unwrap()).unwrap();
        assert_eq!(med[0], med[1]);
        assert!(med[0] > 0.0);
    }

    #[test]
    fn constant_column_takes_gamma_min() {
        // Two variables: one constant and one whose pooled set is {0,2} repeated.
        let x = array![[5.0, 0.0], [5.0, 0.0]];
        let y = array![[5.0, 2.0], [5.0, 2.0]];
        let med = median_lengthscales(&SamplePair::new(x, y, None).unwrap()).unwrap();
        assert_eq!(med[0], med[1]);
        // Pool {0,0,2,2}: diffs {0,4,4,4,4,0} sorted -> median (4+4)/2 = 4, gamma = 2.
        assert_eq!(med[1], 2.0);
    }

    #[test]
    fn all_constant_is_an_error() {
        let x = array![[1.0], [1.0]];
        let pair = SamplePair::new(x.clone(), x, None).unwrap();
        let err = median_lengthscales(&pair).unwrap_err();
        assert!(matches!(err, Error::DegenerateLengthScales(_)));
        assert!(err.to_string().contains("mean heuristic"));
        assert!(mean_lengthscales(&pair).is_err());
    }

    #[test]
    fn constant_mean_column_replaced() {
        // L_d = {c,c,c,...}: zero mean, replaced by the other variable's scale.
        let x = array![[7.0, 0.0], [7.0, 1.0]];
        let y = array![[7.0, 0.0], [7.0, 1.0]];
        let mean = mean_lengthscales(&SamplePair::new(x, y, None).unwrap()).unwrap();
        assert_eq!(mean[0], mean[1]);
    }

    proptest! {
        #[test]
        fn kernel_sign_invariant(seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::data::RngStream::new(seed).rng();
            let d = rng.random_range(1..6);
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let flipped: Vec<f64> = w.iter().map(|v| -v).collect();
            let g: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
            let x = ndarray::Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
            let y = ndarray::Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
            let k1 = ard_kernel(x.view(), y.view(), &KernelParams::new(w, g.clone()).unwrap()).unwrap();
            let k2 = ard_kernel(x.view(), y.view(), &KernelParams::new(flipped, g).unwrap()).unwrap();
            prop_assert_eq!(k1, k2);
            // In exact arithmetic the value lies in (0, 1]; extreme draws
            // may underflow to zero.
            prop_assert!((0.0..=1.0).contains(&k1));
        }

        #[test]
        fn kernel_symmetric(seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::data::RngStream::new(seed).rng();
            let d = rng.random_range(1..6);
            let p = KernelParams::new(
                (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..d).map(|_| rng.random_range(0.1..3.0)).collect(),
            ).unwrap();
            let x = ndarray::Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
            let y = ndarray::Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
            prop_assert_eq!(
                ard_kernel(x.view(), y.view(), &p).unwrap(),
                ard_kernel(y.view(), x.view(), &p).unwrap()
            );
        }
    }
}
