//! LIBSVM text ingestion and synthetic classification problems.
//!
//! Accepted input: one example per line, `<label> <idx>:<val> ...` with
//! 1-based strictly increasing feature indices. `#` starts a comment that runs
//! to the end of the line. Labels must be integers from one of the binary
//! conventions `{-1, +1}`, `{0, 1}` or `{1, 2}`; the latter two are mapped to
//! `{-1, +1}` (`0 → -1`, `2 → -1`).

use crate::problem::{LabeledDataset, ProblemError, SparseRow};
use crate::scalar::Scalar;
use flate2::read::GzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no examples found")]
    Empty,
    #[error("requested dimension {requested} is below the largest feature index {seen}")]
    DimensionTooSmall { requested: usize, seen: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl DataError {
    /// Line number for parse failures.
    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReport {
    pub n_rows: usize,
    /// Largest 1-based index seen, i.e. the inferred feature dimension.
    pub n_features: usize,
    pub n_skipped_comments: usize,
    pub label_mapping_applied: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Lower bound on the feature dimension; use when files of one family
    /// disagree on their largest index.
    pub min_dim: Option<usize>,
}

fn parse_error(line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse { line, message: message.into() }
}

pub fn parse_libsvm<T: Scalar, R: BufRead>(reader: R) -> Result<(LabeledDataset<T>, ParseReport), DataError> {
    parse_libsvm_with(reader, ParseOptions::default())
}

pub fn parse_libsvm_with<T: Scalar, R: BufRead>(
    reader: R,
    opts: ParseOptions,
) -> Result<(LabeledDataset<T>, ParseReport), DataError> {
    let mut rows = Vec::new();
    let mut raw_labels: Vec<(i64, usize)> = Vec::new();
    let mut comments = 0;
    let mut max_index = 0usize;

    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => {
                comments += 1;
                &line[..pos]
            }
            None => line.as_str(),
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label: i64 = label_tok
            .parse()
            .map_err(|_| parse_error(lineno, format!("label `{label_tok}` is not an integer")))?;

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(lineno, format!("malformed feature `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_error(lineno, format!("malformed feature index in `{tok}`")))?;
            if idx == 0 {
                return Err(parse_error(lineno, "feature indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_error(lineno, format!("malformed feature value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(parse_error(lineno, format!("non-finite feature value in `{tok}`")));
            }
            if let Some(&prev) = indices.last() {
                if idx - 1 <= prev {
                    return Err(parse_error(lineno, format!("feature indices not increasing at `{tok}`")));
                }
            }
            indices.push(idx - 1);
            values.push(T::lit(val));
            max_index = max_index.max(idx);
        }
        rows.push(SparseRow::new(indices, values).map_err(|e| parse_error(lineno, e.to_string()))?);
        raw_labels.push((label, lineno));
    }

    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let (labels, mapped) = map_labels::<T>(&raw_labels)?;
    let dim = match opts.min_dim {
        Some(d) if d < max_index => return Err(DataError::DimensionTooSmall { requested: d, seen: max_index }),
        Some(d) => d,
        None => max_index.max(1),
    };
    let report = ParseReport {
        n_rows: rows.len(),
        n_features: max_index,
        n_skipped_comments: comments,
        label_mapping_applied: mapped,
    };
    Ok((LabeledDataset::new(rows, labels, dim)?, report))
}

fn map_labels<T: Scalar>(raw: &[(i64, usize)]) -> Result<(Vec<T>, bool), DataError> {
    let within = |set: &[i64]| raw.iter().all(|(y, _)| set.contains(y));
    let mapping: fn(i64) -> f64 = if within(&[-1, 1]) {
        |y| y as f64
    } else if within(&[0, 1]) {
        |y| if y == 0 { -1.0 } else { 1.0 }
    } else if within(&[1, 2]) {
        |y| if y == 2 { -1.0 } else { 1.0 }
    } else {
        let (y, line) = raw
            .iter()
            .find(|(y, _)| *y != 1 && *y != -1)
            .copied()
            .unwrap_or(raw[0]);
        return Err(parse_error(
            line,
            format!("label {y} does not fit a binary convention ({{-1,+1}}, {{0,1}} or {{1,2}})"),
        ));
    };
    let mapped = !within(&[-1, 1]);
    Ok((raw.iter().map(|&(y, _)| T::lit(mapping(y))).collect(), mapped))
}

/// Opens `path`, transparently decompressing when the name ends in `.gz`.
pub fn load_libsvm<T: Scalar>(
    path: impl AsRef<Path>,
    opts: ParseOptions,
) -> Result<(LabeledDataset<T>, ParseReport), DataError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    parse_libsvm_with(BufReader::new(reader), opts)
}

/// Writes `dataset` in the format accepted by [`parse_libsvm`].
pub fn write_libsvm<T: Scalar, W: Write>(dataset: &LabeledDataset<T>, mut out: W) -> io::Result<()> {
    for (row, &y) in dataset.rows().iter().zip(dataset.labels()) {
        out.write_all(if y > T::zero() { b"+1" } else { b"-1" })?;
        for (j, v) in row.iter() {
            write!(out, " {}:{}", j + 1, v)?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Gaussian features scaled to unit norm, labelled by a hidden linear rule
/// with a little label noise. Deterministic in `seed`.
pub fn synth_classification<T: Scalar>(n: usize, d: usize, seed: u64) -> Result<LabeledDataset<T>, DataError> {
    if n == 0 || d == 0 {
        return Err(ProblemError::InvalidDataset("synthetic problem needs n, d ≥ 1".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let a: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let a: Vec<f64> = a.iter().map(|v| v / norm).collect();
        let noise: f64 = rng.sample(StandardNormal);
        let score = a.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() + 0.1 * noise;
        labels.push(if score >= 0.0 { T::one() } else { -T::one() });
        rows.push(SparseRow::from_dense(&a.iter().map(|&v| T::lit(v)).collect::<Vec<_>>()));
    }
    Ok(LabeledDataset::new(rows, labels, d)?)
}
