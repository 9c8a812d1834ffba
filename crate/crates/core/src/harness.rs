//! Experiment orchestration. Each repetition draws one random start point
//! shared by all algorithms; results go to a CSV trace that [`summarize`]
//! reduces to per-epoch means with confidence intervals.

use crate::data::{self, DataError, ParseOptions};
use crate::geometry::{FeasibleRegion, ProxTerm};
use crate::optimizers::{self, AlgorithmKind, RunError, RunParams};
use crate::problem::{FiniteSumObjective, LabeledDataset, LossKind, Point, ProblemError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{algorithm}, repetition {rep}: {source}")]
    Run { algorithm: AlgorithmKind, rep: usize, source: RunError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Where the examples come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    File(PathBuf),
    /// `synth:n,d[,seed]`
    Synthetic { n: usize, d: usize, seed: u64 },
}

impl DataSource {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let Some(rest) = text.strip_prefix("synth:") else {
            return Ok(DataSource::File(PathBuf::from(text)));
        };
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let bad = || HarnessError::Config(format!("expected synth:n,d[,seed], got `{text}`"));
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let n = parts[0].parse().map_err(|_| bad())?;
        let d = parts[1].parse().map_err(|_| bad())?;
        let seed = match parts.get(2) {
            Some(s) => s.parse().map_err(|_| bad())?,
            None => 0,
        };
        Ok(DataSource::Synthetic { n, d, seed })
    }

    pub fn load(&self, opts: ParseOptions) -> Result<LabeledDataset<f64>, HarnessError> {
        match self {
            DataSource::File(path) => Ok(data::load_libsvm(path, opts)?.0),
            DataSource::Synthetic { n, d, seed } => {
                let ds = data::synth_classification(*n, *d, *seed)?;
                match opts.min_dim {
                    Some(dim) => Ok(ds.with_dim(dim)?),
                    None => Ok(ds),
                }
            }
        }
    }
}

/// Per-algorithm parameter overrides.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmOverrides {
    pub gamma0: Option<f64>,
    pub eta: Option<f64>,
    pub step: Option<f64>,
    pub beta: Option<f64>,
    pub svrgpp_t1: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub min_dim: Option<usize>,
    pub loss: LossKind<f64>,
    /// ℓ2 weight; `None` means `1/n`.
    pub l2_lambda: Option<f64>,
    pub radius: f64,
    pub algorithms: Vec<AlgorithmKind>,
    pub epochs: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub gamma0: f64,
    pub eta: Option<f64>,
    pub step: Option<f64>,
    pub beta: Option<f64>,
    pub overrides: BTreeMap<AlgorithmKind, AlgorithmOverrides>,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn new(data: DataSource, output: impl Into<PathBuf>) -> Self {
        Self {
            data,
            min_dim: None,
            loss: LossKind::Logistic,
            l2_lambda: None,
            radius: 100.0,
            algorithms: vec![AlgorithmKind::AdaVrae, AlgorithmKind::AdaVragII],
            epochs: 30,
            reps: 5,
            base_seed: 0,
            gamma0: 0.01,
            eta: None,
            step: None,
            beta: None,
            overrides: BTreeMap::new(),
            output: output.into(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.reps == 0 {
            return Err(HarnessError::Config("reps must be at least 1".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(HarnessError::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::Config("no algorithms selected".into()));
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..k].contains(a) {
                return Err(HarnessError::Config(format!("algorithm {a} listed twice")));
            }
        }
        if let Some(l) = self.l2_lambda {
            if !(l >= 0.0) {
                return Err(HarnessError::Config(format!("lambda must be nonnegative, got {l}")));
            }
        }
        Ok(())
    }

    /// Effective run parameters of `kind` in repetition seed `seed`.
    pub fn run_params(&self, kind: AlgorithmKind, seed: u64) -> RunParams<f64> {
        let o = self.overrides.get(&kind).cloned().unwrap_or_default();
        RunParams {
            epochs: self.epochs,
            gamma0: o.gamma0.unwrap_or(self.gamma0),
            eta: o.eta.or(self.eta),
            beta_override: o.beta.or(self.beta),
            step_size: o.step.or(self.step),
            seed,
            svrgpp_t1: o.svrgpp_t1,
        }
    }
}

/// Structured configuration file mirroring the `run` flags (TOML).
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<String>,
    pub dim: Option<usize>,
    pub loss: Option<String>,
    pub huber_delta: Option<f64>,
    pub lambda: Option<f64>,
    pub radius: Option<f64>,
    pub algo: Option<Vec<String>>,
    pub epochs: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub gamma0: Option<f64>,
    pub eta: Option<f64>,
    pub step: Option<f64>,
    pub beta: Option<f64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub overrides: BTreeMap<String, AlgorithmOverrides>,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}

/// Parses a loss name, attaching `huber_delta` to the Huber loss.
pub fn parse_loss(name: &str, huber_delta: Option<f64>) -> Result<LossKind<f64>, HarnessError> {
    match name.trim().to_ascii_lowercase().as_str() {
        "logistic" => Ok(LossKind::Logistic),
        "squared" => Ok(LossKind::Squared),
        "huber" => {
            let delta = huber_delta.unwrap_or(LossKind::<f64>::DEFAULT_HUBER_DELTA);
            if !(delta > 0.0) {
                return Err(HarnessError::Config(format!("huber delta must be positive, got {delta}")));
            }
            Ok(LossKind::Huber { delta })
        }
        other => Err(HarnessError::Config(format!("unknown loss `{other}`"))),
    }
}

/// Initial point with coordinates uniform on `[0, 10]`.
pub fn init_point(d: usize, seed: u64) -> Point<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep this stream apart from the sampling stream of runs with the same seed
    rng.set_stream(1);
    (0..d).map(|_| rng.random_range(0.0..=10.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub algorithm: String,
    pub option: String,
    pub rep: usize,
    pub seed: u64,
    pub epoch: usize,
    pub grads: u64,
    pub grads_over_n: f64,
    pub objective: f64,
}

pub const TRACE_HEADER: [&str; 8] = ["algorithm", "option", "rep", "seed", "epoch", "grads", "grads_over_n", "objective"];

pub const SUMMARY_HEADER: [&str; 8] = [
    "algorithm",
    "option",
    "epoch",
    "reps",
    "grads_over_n",
    "objective_mean",
    "ci_low",
    "ci_high",
];

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

impl CsvRow {
    fn record(&self) -> [String; 8] {
        [
            self.algorithm.clone(),
            self.option.clone(),
            self.rep.to_string(),
            self.seed.to_string(),
            self.epoch.to_string(),
            self.grads.to_string(),
            fmt_num(self.grads_over_n),
            fmt_num(self.objective),
        ]
    }

    fn sort_key(&self) -> (&str, &str, usize, usize) {
        (&self.algorithm, &self.option, self.rep, self.epoch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecuteReport {
    pub rows: Vec<CsvRow>,
    pub n: usize,
    pub d: usize,
    pub l2_lambda: f64,
    pub warnings: Vec<String>,
}

/// Runs every algorithm on every repetition and returns the sorted rows
/// without touching the filesystem.
pub fn collect(config: &ExperimentConfig) -> Result<ExecuteReport, HarnessError> {
    config.validate()?;
    let dataset = config.data.load(ParseOptions { min_dim: config.min_dim })?;
    let n = dataset.len();
    let d = dataset.dim();
    let lambda = config.l2_lambda.unwrap_or(1.0 / n as f64);
    let objective = FiniteSumObjective::new(dataset, config.loss, lambda)?;

    type RepOutput = Result<(Vec<CsvRow>, Vec<String>), HarnessError>;
    let per_rep: Vec<RepOutput> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = config.base_seed.wrapping_add(rep as u64);
            let u0 = init_point(d, seed);
            let region = FeasibleRegion::ball(u0.clone(), config.radius)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let mut rows = Vec::new();
            let mut warnings = Vec::new();
            for &kind in &config.algorithms {
                let params = config.run_params(kind, seed);
                let trace = optimizers::run(&objective, &region, &ProxTerm::Zero, kind, &u0, &params)
                    .map_err(|source| HarnessError::Run { algorithm: kind, rep, source })?;
                warnings.extend(trace.meta.warnings.iter().map(|w| format!("{kind} rep {rep}: {w}")));
                rows.extend(trace.entries.iter().map(|e| CsvRow {
                    algorithm: kind.family().to_string(),
                    option: kind.option().to_string(),
                    rep,
                    seed,
                    epoch: e.epoch,
                    grads: e.grads,
                    grads_over_n: e.grads as f64 / n as f64,
                    objective: e.objective,
                }));
            }
            Ok((rows, warnings))
        })
        .collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for r in per_rep {
        let (r, w) = r?;
        rows.extend(r);
        warnings.extend(w);
    }
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(ExecuteReport { rows, n, d, l2_lambda: lambda, warnings })
}

/// Runs the experiment and writes the trace CSV to `config.output`
/// atomically (temporary file in the same directory, then rename).
pub fn execute(config: &ExperimentConfig) -> Result<ExecuteReport, HarnessError> {
    let report = collect(config)?;
    write_atomic(&config.output, |w| write_trace_csv(&report.rows, w))?;
    Ok(report)
}

pub fn write_trace_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.record()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> HarnessError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    HarnessError::Csv { line, message: e.to_string() }
}

pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = io::BufWriter::new(tmp.as_file_mut());
        body(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).map_err(|e| HarnessError::Io(e.error))?;
    Ok(())
}

pub fn read_trace_csv<R: io::Read>(input: R) -> Result<Vec<CsvRow>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(TRACE_HEADER) {
        return Err(HarnessError::Csv { line: 1, message: format!("unexpected header {headers:?}") });
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec.map_err(csv_err)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub option: String,
    pub epoch: usize,
    pub reps: usize,
    pub grads_over_n: f64,
    pub objective_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean and normal-approximation 95% interval `mean ± 1.96·sd/√reps` of the
/// objective per (algorithm, option, epoch). A single repetition gives a
/// zero-width interval.
pub fn summarize_rows(rows: &[CsvRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<&CsvRow>> = BTreeMap::new();
    for row in rows {
        groups.entry((&row.algorithm, &row.option, row.epoch)).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((algorithm, option, epoch), mut members)| {
            members.sort_by(|a, b| a.rep.cmp(&b.rep).then(a.objective.total_cmp(&b.objective)));
            let k = members.len() as f64;
            let mean_g = members.iter().map(|r| r.grads_over_n).sum::<f64>() / k;
            let mean = members.iter().map(|r| r.objective).sum::<f64>() / k;
            let sd = if members.len() > 1 {
                (members.iter().map(|r| (r.objective - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = 1.96 * sd / k.sqrt();
            SummaryRow {
                algorithm: algorithm.to_string(),
                option: option.to_string(),
                epoch,
                reps: members.len(),
                grads_over_n: mean_g,
                objective_mean: mean,
                ci_low: mean - half,
                ci_high: mean + half,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.option.clone(),
            r.epoch.to_string(),
            r.reps.to_string(),
            fmt_num(r.grads_over_n),
            fmt_num(r.objective_mean),
            fmt_num(r.ci_low),
            fmt_num(r.ci_high),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV and writes its summary.
pub fn summarize(input: &Path, output: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let rows = read_trace_csv(fs::File::open(input)?)?;
    let summary = summarize_rows(&rows);
    write_atomic(output, |w| write_summary_csv(&summary, w))?;
    Ok(summary)
}
