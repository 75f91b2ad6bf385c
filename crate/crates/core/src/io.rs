//! File formats: logits CSV and JSON run configurations.
//!
//! A logits file is UTF-8 CSV with LF line endings and no header. Each row is
//! an integer label followed by the `K` logits of that example; `K` is taken
//! from the first row and must not change.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binning::BinningSpec;
use crate::data::EvalSet;
use crate::error::{CalrefError, Result};
use crate::metrics::EVAL_BINS;
use crate::trainer::{SweepGrid, TaskKind, TrainConfig};

fn parse_error(line: u64, message: impl Into<String>) -> CalrefError {
    CalrefError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a logits file from any reader.
pub fn read_logits<R: Read>(reader: R) -> Result<EvalSet> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut k = 0usize;
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if k == 0 {
            if record.len() < 3 {
                return Err(parse_error(
                    line,
                    format!("need a label and at least 2 logits, got {} fields", record.len()),
                ));
            }
            k = record.len() - 1;
        } else if record.len() != k + 1 {
            return Err(parse_error(
                line,
                format!("expected {} fields, got {}", k + 1, record.len()),
            ));
        }
        let label: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(line, format!("label {:?} is not a non-negative integer", &record[0])))?;
        if label >= k {
            return Err(parse_error(line, format!("label {label} out of range for {k} classes")));
        }
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(line, format!("{field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(line, format!("non-finite logit {field:?}")));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(CalrefError::Ingest("logits file has no rows".into()));
    }
    let logits = ndarray::Array2::from_shape_vec((labels.len(), k), values).expect("rectangular by construction");
    EvalSet::new(logits, labels)
}

pub fn read_logits_file(path: &Path) -> Result<EvalSet> {
    let file = File::open(path).map_err(|e| CalrefError::Ingest(format!("cannot open {}: {e}", path.display())))?;
    read_logits(file)
}

/// Writes `set` with the shortest decimal form that parses back to the same
/// `f64`.
pub fn write_logits<W: Write>(writer: W, set: &EvalSet) -> Result<()> {
    let mut out = BufWriter::new(writer);
    for (row, label) in set.logits().rows().into_iter().zip(set.labels()) {
        write!(out, "{label}")?;
        for v in row {
            write!(out, ",{v:?}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_logits_file(path: &Path, set: &EvalSet) -> Result<()> {
    write_logits(File::create(path)?, set)
}

fn default_binning() -> BinningSpec {
    BinningSpec::equal_mass(EVAL_BINS).expect("positive bin count")
}

/// Configuration of a training run: the synthetic task, the trainer settings
/// and the hard binning used for the test-set report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    pub samples: usize,
    pub train: TrainConfig,
    #[serde(default = "default_binning")]
    pub binning: BinningSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        BinningSpec::new(self.binning.scheme, self.binning.bins)?;
        if self.samples < 100 {
            return Err(CalrefError::Config(format!(
                "need at least 100 samples, got {}",
                self.samples
            )));
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CalrefError::Ingest(format!("cannot read {}: {e}", path.display())))
}

/// Parses and validates a run configuration. Unknown keys are rejected.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| CalrefError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(&read_text(path)?)
}

pub fn parse_sweep_grid(text: &str) -> Result<SweepGrid> {
    serde_json::from_str(text).map_err(|e| CalrefError::Config(e.to_string()))
}

pub fn load_sweep_grid(path: &Path) -> Result<SweepGrid> {
    parse_sweep_grid(&read_text(path)?)
}
