//! Dense binary-classification datasets: loading, splitting, synthesis.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Minimum number of rows accepted by [`split`].
pub const MIN_SPLIT_ROWS: usize = 10;

/// Dense row-major feature matrix with `{0,1}` labels.
///
/// `rows` records, for each row, its index in the dataset it was derived from,
/// so splits and subsamples can be traced back. Reads of the full matrix
/// through [`Dataset::scan`] are counted.
#[derive(Debug)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    partitions: Vec<Range<usize>>,
    rows: Vec<usize>,
    scans: AtomicU64,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
            partitions: self.partitions.clone(),
            rows: self.rows.clone(),
            scans: AtomicU64::new(0),
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.y == other.y && self.partitions == other.partitions
    }
}

/// One contiguous block of rows, the unit of data-parallel work.
#[derive(Debug, Clone, Copy)]
pub struct Shard<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid_argument(format!(
                "{} feature rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid_argument(format!("label {bad} is not 0 or 1")));
        }
        let n = x.nrows();
        Ok(Dataset {
            x,
            y,
            partitions: vec![0..n],
            rows: (0..n).collect(),
            scans: AtomicU64::new(0),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    /// Feature matrix, without counting a scan.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn labels(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    /// Indices of these rows in the parent dataset.
    pub fn source_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn partitions(&self) -> &[Range<usize>] {
        &self.partitions
    }

    /// Splits rows into `count` contiguous partitions of near-equal size.
    pub fn with_partitions(mut self, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid_argument("partition count must be at least 1"));
        }
        let n = self.n_rows();
        let count = count.min(n.max(1));
        let (base, extra) = (n / count, n % count);
        let mut start = 0;
        self.partitions = (0..count)
            .map(|i| {
                let len = base + usize::from(i < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(self)
    }

    /// Shards for the current partitioning. Counts one scan of the data.
    pub fn scan(&self) -> Vec<Shard<'_>> {
        self.scans.fetch_add(1, Ordering::Relaxed);
        self.partitions
            .iter()
            .map(|r| Shard {
                x: self.x.slice(s![r.clone(), ..]),
                y: self.y.slice(s![r.clone()]),
            })
            .collect()
    }

    /// Number of times [`Dataset::scan`] has been called.
    pub fn scan_count(&self) -> u64 {
        self.scans.load(Ordering::Relaxed)
    }

    /// Copy of the selected rows, keeping provenance.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
            partitions: vec![0..idx.len()],
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            scans: AtomicU64::new(0),
        }
    }

    /// Copy with only the given feature columns.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(1), cols),
            y: self.y.clone(),
            partitions: self.partitions.clone(),
            rows: self.rows.clone(),
            scans: AtomicU64::new(0),
        }
    }

    /// Same labels and provenance, new features (for feature expansion).
    pub fn with_features(&self, x: Array2<f64>) -> Result<Dataset> {
        if x.nrows() != self.n_rows() {
            return Err(Error::invalid_argument("feature row count changed"));
        }
        Ok(Dataset {
            x,
            y: self.y.clone(),
            partitions: self.partitions.clone(),
            rows: self.rows.clone(),
            scans: AtomicU64::new(0),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Shuffles rows with a seeded permutation and cuts them by `ratios`.
///
/// Validation and test sizes are floored; the remainder goes to training.
pub fn split(ds: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<DataSplit> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid_argument(format!(
            "split ratios must be in [0,1] and sum to 1, got {ratios:?}"
        )));
    }
    let n = ds.n_rows();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::TooSmall {
            rows: n,
            min: MIN_SPLIT_ROWS,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 * va).floor() as usize;
    let n_test = (n as f64 * te).floor() as usize;
    let n_train = n - n_val - n_test;
    Ok(DataSplit {
        train: ds.select_rows(&perm[..n_train]),
        validation: ds.select_rows(&perm[n_train..n_train + n_val]),
        test: ds.select_rows(&perm[n_train + n_val..]),
    })
}

/// The 70/20/10 split used throughout the planner.
pub fn standard_split(ds: &Dataset, seed: u64) -> Result<DataSplit> {
    split(ds, (0.7, 0.2, 0.1), seed)
}

/// Gaussian features labelled by a hidden hyperplane through the origin,
/// each label flipped independently with probability `noise_rate`.
pub fn synth(n: usize, d: usize, seed: u64, noise_rate: f64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::invalid_argument("synthetic data needs n, d >= 1"));
    }
    if !(0.0..0.5).contains(&noise_rate) {
        return Err(Error::invalid_argument(format!("noise rate {noise_rate} outside [0, 0.5)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Array1::<f64>::zeros(n);
    for (mut row, label) in x.rows_mut().into_iter().zip(y.iter_mut()) {
        let mut margin = 0.0;
        for (v, h) in row.iter_mut().zip(&hidden) {
            *v = rng.sample(StandardNormal);
            margin += *v * h;
        }
        let clean = margin > 0.0;
        let flip = rng.random::<f64>() < noise_rate;
        *label = if clean != flip { 1.0 } else { 0.0 };
    }
    Dataset::new(x, y)
}

/// Seeded uniform subsample without replacement of `round(n * proportion)`
/// rows, kept in original order.
pub fn downsample(ds: &Dataset, proportion: f64, seed: u64) -> Result<Dataset> {
    if !(proportion > 0.0 && proportion <= 1.0) {
        return Err(Error::invalid_argument(format!("proportion {proportion} outside (0, 1]")));
    }
    let n = ds.n_rows();
    let keep = (n as f64 * proportion).round() as usize;
    if keep == 0 {
        return Err(Error::invalid_argument("downsample would keep no rows"));
    }
    if keep == n {
        return Ok(ds.clone());
    }
    let mut idx = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, keep).into_vec();
    idx.sort_unstable();
    Ok(ds.select_rows(&idx))
}

pub(crate) fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: {tok:?}"),
    })
}

pub(crate) fn label_01(v: f64, line: usize) -> Result<f64> {
    match v {
        x if x == 1.0 => Ok(1.0),
        x if x == 0.0 || x == -1.0 => Ok(0.0),
        other => Err(Error::Parse {
            line,
            message: format!("label {other} is not one of -1, 0, 1"),
        }),
    }
}

/// Comma-separated decimal rows, last column the label.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut width = None;
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                message: "need at least one feature and a label".into(),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {w} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        let (label, xs) = fields.split_last().expect("non-empty");
        for f in xs {
            feats.push(parse_f64(f, lineno)?);
        }
        labels.push(label_01(parse_f64(label, lineno)?, lineno)?);
    }
    let d = width.map_or(0, |w| w - 1);
    let x = Array2::from_shape_vec((labels.len(), d), feats).expect("shape checked per row");
    Dataset::new(x, Array1::from(labels))
}

/// Sparse `label index:value ...` rows with 1-based indices; absent entries
/// are zero and the width is the largest index seen.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label = toks.next().expect("non-empty line");
        // Accept the unicode minus as well as '-'.
        let label = label.replace('\u{2212}', "-");
        labels.push(label_01(parse_f64(&label, lineno)?, lineno)?);
        let mut row = Vec::new();
        let mut last = 0;
        for tok in toks {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected index:value, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad index {idx:?}"),
            })?;
            if idx == 0 || idx <= last {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("indices must be 1-based and increasing, found {idx}"),
                });
            }
            last = idx;
            width = width.max(idx);
            row.push((idx - 1, parse_f64(val, lineno)?));
        }
        rows.push(row);
    }
    let mut x = Array2::<f64>::zeros((rows.len(), width));
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            x[[r, c]] = v;
        }
    }
    Dataset::new(x, Array1::from(labels))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_libsvm(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Loads by extension: `.csv` as CSV, anything else as libsvm.
pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_csv(path),
        _ => load_libsvm(path),
    }
}

pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    for (row, label) in ds.x.rows().into_iter().zip(&ds.y) {
        for v in row {
            write!(out, "{v},").expect("write to string");
        }
        writeln!(out, "{label}").expect("write to string");
    }
    out
}

pub fn to_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for (row, label) in ds.x.rows().into_iter().zip(&ds.y) {
        out.push_str(if *label == 1.0 { "+1" } else { "-1" });
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{v}", j + 1).expect("write to string");
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_sizes() {
        let ds = synth(100, 3, 1, 0.0).unwrap();
        let sp = standard_split(&ds, 5).unwrap();
        assert_eq!((sp.train.n_rows(), sp.validation.n_rows(), sp.test.n_rows()), (70, 20, 10));
        let ds = synth(101, 3, 1, 0.0).unwrap();
        let sp = standard_split(&ds, 5).unwrap();
        assert_eq!((sp.train.n_rows(), sp.validation.n_rows(), sp.test.n_rows()), (71, 20, 10));
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let ds = synth(57, 2, 9, 0.1).unwrap();
        let a = standard_split(&ds, 3).unwrap();
        let b = standard_split(&ds, 3).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test.source_rows(), b.test.source_rows());
        let mut all: Vec<usize> = [&a.train, &a.validation, &a.test]
            .iter()
            .flat_map(|d| d.source_rows().to_vec())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
        for d in [&a.train, &a.validation, &a.test] {
            for (k, &r) in d.source_rows().iter().enumerate() {
                assert_eq!(d.features().row(k), ds.features().row(r));
            }
        }
    }

    #[test]
    fn split_rejects_tiny_data() {
        let ds = synth(9, 2, 0, 0.0).unwrap();
        assert!(matches!(standard_split(&ds, 0), Err(Error::TooSmall { rows: 9, .. })));
    }

    #[test]
    fn synth_shape_and_flip_rate() {
        let ds = synth(40, 7, 2, 0.0).unwrap();
        assert_eq!((ds.n_rows(), ds.n_features(), ds.labels().len()), (40, 7, 40));

        let (n, rate) = (100_000, 0.2);
        let clean = synth(n, 5, 77, 0.0).unwrap();
        let noisy = synth(n, 5, 77, rate).unwrap();
        // Same seed draws the same features; only the labels differ.
        assert_eq!(clean.features(), noisy.features());
        let flipped = clean
            .labels()
            .iter()
            .zip(noisy.labels())
            .filter(|(a, b)| a != b)
            .count() as f64
            / n as f64;
        assert!((flipped - rate).abs() <= 0.01, "flip fraction {flipped}");
    }

    #[test]
    fn csv_example() {
        let ds = parse_csv("1.0,2.0,1\n0.5,0.1,0\n").unwrap();
        assert_eq!(ds.features(), ndarray::array![[1.0, 2.0], [0.5, 0.1]]);
        assert_eq!(ds.labels(), ndarray::array![1.0, 0.0]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        match parse_csv("1,2,1\n1,2\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_csv("1,2,1\n1,x,0\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn libsvm_example() {
        let ds = parse_libsvm("\u{2212}1 1:3.0 3:1.5").unwrap();
        assert_eq!(ds.features(), ndarray::array![[3.0, 0.0, 1.5]]);
        assert_eq!(ds.labels(), ndarray::array![0.0]);
        let ds = parse_libsvm("-1 1:3.0 3:1.5\n+1 2:2\n").unwrap();
        assert_eq!(ds.features(), ndarray::array![[3.0, 0.0, 1.5], [0.0, 2.0, 0.0]]);
        assert!(matches!(parse_libsvm("1 0:1.0"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_libsvm("1 1:1.0\n1 a"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn downsample_cases() {
        let ds = synth(1000, 3, 4, 0.1).unwrap();
        assert_eq!(downsample(&ds, 1.0, 0).unwrap(), ds);
        let sub = downsample(&ds, 0.25, 8).unwrap();
        assert_eq!(sub.n_rows(), 250);
        for (k, &r) in sub.source_rows().iter().enumerate() {
            assert_eq!(sub.features().row(k), ds.features().row(r));
        }
        assert_eq!(downsample(&ds, 0.25, 8).unwrap().source_rows(), sub.source_rows());
        assert!(downsample(&ds, 0.0, 0).is_err());
        assert!(downsample(&ds, 1.5, 0).is_err());
    }

    #[test]
    fn partitions_cover_rows_and_count_scans() {
        let ds = synth(10, 2, 0, 0.0).unwrap().with_partitions(3).unwrap();
        assert_eq!(ds.partitions(), &[0..4, 4..7, 7..10]);
        let shards = ds.scan();
        assert_eq!(shards.iter().map(|s| s.x.nrows()).sum::<usize>(), 10);
        ds.scan();
        assert_eq!(ds.scan_count(), 2);
    }

    proptest! {
        #[test]
        fn text_formats_round_trip_bitwise(seed in any::<u64>(), n in 1usize..20, d in 1usize..6) {
            let ds = synth(n, d, seed, 0.2).unwrap();
            prop_assert_eq!(&parse_csv(&to_csv(&ds)).unwrap(), &ds);
            let back = parse_libsvm(&to_libsvm(&ds)).unwrap();
            // libsvm width is the largest non-zero index; Gaussian data has no zeros.
            prop_assert_eq!(&back, &ds);
        }
    }
}
