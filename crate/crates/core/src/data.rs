//! Dataset representation, CSV ingestion, deterministic splitting and seeding.
//!
//! Everything downstream works on a [`SamplePair`]: two row-major matrices
//! with one row per sample and one column per variable. Randomness flows
//! through [`RngStream`] values, which are cheap to copy and can be split
//! into independent child streams so that parallel tasks stay reproducible
//! regardless of scheduling.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Two datasets with identical column count, plus column names.
#[derive(Debug, Clone)]
pub struct SamplePair {
    x: Array2<f64>,
    y: Array2<f64>,
    column_names: Vec<String>,
}

impl SamplePair {
    /// Builds a pair, checking the shape and finiteness invariants.
    /// Column names are synthesised as `v0..v{D-1}` when absent.
    pub fn new(x: Array2<f64>, y: Array2<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "x has {} columns, y has {}",
                x.ncols(),
                y.ncols()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("datasets need at least one column".into()));
        }
        if x.nrows() < 2 || y.nrows() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 rows per dataset (got n={}, m={})",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("datasets contain NaN or infinite entries".into()));
        }
        let column_names = match column_names {
            Some(names) => {
                if names.len() != x.ncols() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} column names for {} columns",
                        names.len(),
                        x.ncols()
                    )));
                }
                names
            }
            None => (0..x.ncols()).map(|d| format!("v{d}")).collect(),
        };
        Ok(Self { x, y, column_names })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Number of rows in `x`.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of rows in `y`.
    pub fn m(&self) -> usize {
        self.y.nrows()
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Restriction of both datasets to the given columns (ascending order
    /// not required; indices are taken as given).
    pub fn restrict_columns(&self, columns: &[usize]) -> Result<Self> {
        for &c in columns {
            if c >= self.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "column index {c} out of range for {} variables",
                    self.dim()
                )));
            }
        }
        let names = columns.iter().map(|&c| self.column_names[c].clone()).collect();
        SamplePair::new(
            self.x.select(Axis(1), columns),
            self.y.select(Axis(1), columns),
            Some(names),
        )
    }
}

/// A train/validation split of a [`SamplePair`].
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: SamplePair,
    pub val: SamplePair,
    pub seed: u64,
}

/// A splittable, counter-style random stream.
///
/// Two streams with equal `(master_seed, stream_index)` produce identical
/// sequences. [`RngStream::child`] derives a new stream index by mixing, so
/// every task in a parallel grid can own its stream and results do not
/// depend on scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, stream_index: 0 }
    }

    /// Derives an independent child stream. Children of distinct indices,
    /// and children of distinct parents, get distinct stream indices for
    /// all practical purposes.
    pub fn child(&self, index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_index: splitmix64(self.stream_index ^ splitmix64(index.wrapping_add(1))),
        }
    }

    /// Instantiates the generator for this stream. ChaCha keeps streams with
    /// the same key but different stream numbers non-overlapping.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Loads a comma-separated matrix of finite reals. Returns the matrix and,
/// when `has_header` is set, the header names.
///
/// Row/column positions in errors are 1-based physical file coordinates.
pub fn load_csv(path: &Path, has_header: bool) -> Result<(Array2<f64>, Option<Vec<String>>)> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let reader = BufReader::new(file);

    let mut header: Option<Vec<String>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut ncols: Option<usize> = None;
    let mut nrows = 0usize;

    for (line_idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io { path: path.into(), source })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line_idx == 0 && has_header {
            header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        if line.is_empty() && values.is_empty() && !has_header {
            // Entirely empty file handled below.
            continue;
        }
        let row_no = line_idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        match ncols {
            None => {
                if let Some(h) = &header {
                    if h.len() != fields.len() {
                        return Err(Error::RaggedRow { row: row_no, expected: h.len(), got: fields.len() });
                    }
                }
                ncols = Some(fields.len());
            }
            Some(expected) if expected != fields.len() => {
                return Err(Error::RaggedRow { row: row_no, expected, got: fields.len() });
            }
            _ => {}
        }
        for (col_idx, field) in fields.iter().enumerate() {
            let token = field.trim();
            let v: f64 = token.parse().map_err(|_| Error::NonNumericCell {
                row: row_no,
                col: col_idx + 1,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    row: row_no,
                    col: col_idx + 1,
                    token: token.to_string(),
                });
            }
            values.push(v);
        }
        nrows += 1;
    }

    let ncols = ncols.ok_or_else(|| Error::InvalidData(format!("{}: no data rows", path.display())))?;
    let matrix = Array2::from_shape_vec((nrows, ncols), values)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    Ok((matrix, header))
}

/// Writes a matrix as CSV. Values use shortest round-trip decimal formatting,
/// so a save/load cycle reproduces the matrix bit-exactly.
pub fn save_csv(path: &Path, matrix: &Array2<f64>, header: Option<&[String]>) -> Result<()> {
    let mut out = String::new();
    if let Some(names) = header {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for row in matrix.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
    file.write_all(out.as_bytes())
        .map_err(|source| Error::Io { path: path.into(), source })
}

fn shuffled_indices(count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(rng);
    idx
}

fn take_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

/// Splits a pair into train and validation parts by the ratio
/// `rho_train : 1 - rho_train`. Rows of `x` are permuted by the stream and
/// the first `floor(rho_train * n)` go to train; `y` is treated the same
/// way independently. Every part must keep at least two rows.
pub fn split_pair(pair: &SamplePair, rho_train: f64, rng: &RngStream) -> Result<SplitPair> {
    if !(rho_train > 0.0 && rho_train < 1.0) {
        return Err(Error::InvalidConfig(format!("rho_train must lie in (0,1), got {rho_train}")));
    }
    let n = pair.n();
    let m = pair.m();
    let n_train = (rho_train * n as f64).floor() as usize;
    let m_train = (rho_train * m as f64).floor() as usize;
    for (label, total, train) in [("x", n, n_train), ("y", m, m_train)] {
        if train < 2 || total - train < 2 {
            return Err(Error::SplitTooSmall(format!(
                "{label}: {total} rows at rho_train={rho_train} leaves train={train}, val={}",
                total - train
            )));
        }
    }
    let mut gen = rng.rng();
    let x_idx = shuffled_indices(n, &mut gen);
    let y_idx = shuffled_indices(m, &mut gen);
    let names = Some(pair.column_names().to_vec());
    let train = SamplePair::new(
        take_rows(pair.x(), &x_idx[..n_train]),
        take_rows(pair.y(), &y_idx[..m_train]),
        names.clone(),
    )?;
    let val = SamplePair::new(
        take_rows(pair.x(), &x_idx[n_train..]),
        take_rows(pair.y(), &y_idx[m_train..]),
        names,
    )?;
    Ok(SplitPair { train, val, seed: rng.stream_index })
}

/// Truncation policy for estimators that need `n = m`: when the sides
/// differ, both datasets are shuffled by the stream and cut to
/// `min(n, m)` rows. Pairs that already match are returned unchanged.
pub fn equalize_rows(pair: &SamplePair, rng: &RngStream) -> SamplePair {
    let n = pair.n();
    let m = pair.m();
    if n == m {
        return pair.clone();
    }
    let keep = n.min(m);
    let mut gen = rng.rng();
    let x_idx = shuffled_indices(n, &mut gen);
    let y_idx = shuffled_indices(m, &mut gen);
    SamplePair::new(
        take_rows(pair.x(), &x_idx[..keep]),
        take_rows(pair.y(), &y_idx[..keep]),
        Some(pair.column_names().to_vec()),
    )
    .expect("truncation preserves pair invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_plain_matrix() {
        let f = write_temp("1,2\n3,4\n");
        let (m, names) = load_csv(f.path(), false).unwrap();
        assert_eq!(m, array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(names.is_none());
    }

    #[test]
    fn load_with_header() {
        let f = write_temp("a,b\n0,0\n");
        let (m, names) = load_csv(f.path(), true).unwrap();
        assert_eq!(m, array![[0.0, 0.0]]);
        assert_eq!(names.unwrap(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let f = write_temp("1,x\n");
        let err = load_csv(f.path(), false).unwrap_err();
        match err {
            Error::NonNumericCell { row, col, token } => {
                assert_eq!((row, col), (1, 2));
                assert_eq!(token, "x");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let f = write_temp("1,2\n3\n");
        let err = load_csv(f.path(), false).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 2, expected: 2, got: 1 }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/nonexistent/file.csv"), false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn pair_invariants_enforced() {
        let x = array![[0.0], [1.0]];
        let y = array![[0.0, 1.0], [1.0, 2.0]];
        assert!(SamplePair::new(x.clone(), y, None).is_err());
        let y1 = array![[f64::NAN], [0.0]];
        assert!(SamplePair::new(x.clone(), y1, None).is_err());
        let y2 = array![[0.0]];
        assert!(SamplePair::new(x, y2, None).is_err());
    }

    #[test]
    fn synthesised_column_names() {
        let x = array![[0.0, 1.0], [1.0, 2.0]];
        let pair = SamplePair::new(x.clone(), x, None).unwrap();
        assert_eq!(pair.column_names(), &["v0".to_string(), "v1".to_string()]);
    }

    #[test]
    fn split_counts_and_determinism() {
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64);
        let pair = SamplePair::new(x.clone(), x, None).unwrap();
        let stream = RngStream::new(7);
        let s1 = split_pair(&pair, 0.5, &stream).unwrap();
        assert_eq!((s1.train.n(), s1.train.m(), s1.val.n(), s1.val.m()), (2, 2, 2, 2));
        let s2 = split_pair(&pair, 0.5, &stream).unwrap();
        assert_eq!(s1.train.x(), s2.train.x());
        assert_eq!(s1.val.y(), s2.val.y());
    }

    #[test]
    fn split_too_small() {
        let x = Array2::from_shape_fn((3, 1), |(i, _)| i as f64);
        let pair = SamplePair::new(x.clone(), x, None).unwrap();
        let err = split_pair(&pair, 0.5, &RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::SplitTooSmall(_)));
    }

    #[test]
    fn equal_streams_equal_sequences() {
        use rand::RngCore;
        let a = RngStream::new(3).child(5);
        let b = RngStream::new(3).child(5);
        let va: Vec<u64> = {
            let mut r = a.rng();
            (0..8).map(|_| r.next_u64()).collect()
        };
        let vb: Vec<u64> = {
            let mut r = b.rng();
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(va, vb);
        assert_ne!(a.child(0), a.child(1));
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in 1usize..6, cols in 1usize..5, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = RngStream::new(seed).rng();
            let m = Array2::from_shape_fn((rows, cols), |_| {
                // Mix magnitudes to exercise the formatter.
                let v: f64 = rng.random_range(-1.0..1.0);
                v * 10f64.powi(rng.random_range(-12..12))
            });
            let f = tempfile::NamedTempFile::new().unwrap();
            save_csv(f.path(), &m, None).unwrap();
            let (back, _) = load_csv(f.path(), false).unwrap();
            prop_assert_eq!(m, back);
        }

        #[test]
        fn split_rows_are_disjoint_and_complete(seed in any::<u64>(), n in 4usize..20, m in 4usize..20) {
            let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
            let y = Array2::from_shape_fn((m, 1), |(i, _)| 1000.0 + i as f64);
            let pair = SamplePair::new(x, y, None).unwrap();
            let split = split_pair(&pair, 0.5, &RngStream::new(seed)).unwrap();
            let mut seen: Vec<f64> = split.train.x().iter().chain(split.val.x().iter()).copied().collect();
            seen.sort_by(f64::total_cmp);
            let expect: Vec<f64> = (0..n).map(|i| i as f64).collect();
            prop_assert_eq!(seen, expect);
            let mut seen_y: Vec<f64> = split.train.y().iter().chain(split.val.y().iter()).copied().collect();
            seen_y.sort_by(f64::total_cmp);
            let expect_y: Vec<f64> = (0..m).map(|i| 1000.0 + i as f64).collect();
            prop_assert_eq!(seen_y, expect_y);
        }
    }
}
