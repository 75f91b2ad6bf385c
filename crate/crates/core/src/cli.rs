//! Command-line interface. [`run`] is the whole program short of exiting, so
//! it can be driven in-process.
//!
//! Exit codes: 0 success, 2 bad input data, 64 usage or configuration error,
//! 1 anything else.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::binning::{BinningScheme, BinningSpec, SoftBinningSpec};
use crate::data::{summarize, EvalSet, PredictionSummary};
use crate::error::{CalrefError, Result};
use crate::io::{load_run_config, load_sweep_grid, read_logits_file, write_logits_file, RunConfig};
use crate::metrics::{ece, evaluation_ece, reliability_table, sb_ece, EceMode, EVAL_BINS, EVAL_P};
use crate::recalibration::{fit_temperature, TsObjective};
use crate::trainer::{
    evaluate, make_synthetic_task, predict, sweep_one_at_a_time, train, EvalMetrics, SweepOutcome, SyntheticTask,
    TrainReport,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

/// Environment variable that overrides the configured seed. `--seed` wins.
pub const SEED_ENV: &str = "CALREF_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "calref",
    version,
    about = "Calibration metrics, temperature scaling and calibration-aware training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibration error, accuracy, confidence and entropy of a logits file.
    Metrics(MetricsArgs),
    /// Fit a temperature on one logits file and evaluate it on another.
    Recalibrate(RecalibrateArgs),
    /// Per-bin confidence, accuracy and weight as CSV.
    Reliability(ReliabilityArgs),
    /// Train on a synthetic task described by a run configuration.
    Train(TrainArgs),
    /// One-at-a-time hyperparameter sweep.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    EqualMass,
    EqualWidth,
}

impl From<SchemeArg> for BinningScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::EqualMass => BinningScheme::EqualMass,
            SchemeArg::EqualWidth => BinningScheme::EqualWidth,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Binned,
    LabelBinned,
}

impl From<ModeArg> for EceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Binned => EceMode::Binned,
            ModeArg::LabelBinned => EceMode::LabelBinned,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Nll,
    SbEce,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    logits: PathBuf,
    /// Also report the same metrics for this file.
    #[arg(long)]
    val_logits: Option<PathBuf>,
    #[arg(long, default_value_t = EVAL_BINS)]
    bins: usize,
    #[arg(long, default_value_t = EVAL_P)]
    p: f64,
    /// Hard binning scheme; soft binning always uses equal-width centers.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum, default_value = "binned")]
    mode: ModeArg,
    /// Soft-binned estimate instead of hard bins.
    #[arg(long)]
    soft: bool,
    #[arg(long, default_value_t = 0.01, requires = "soft")]
    bin_temp: f64,
}

#[derive(Debug, Args)]
struct RecalibrateArgs {
    #[arg(long)]
    val_logits: PathBuf,
    #[arg(long)]
    test_logits: PathBuf,
    #[arg(long, value_enum)]
    objective: ObjectiveArg,
    /// Soft bins of the sb-ece objective.
    #[arg(long, default_value_t = EVAL_BINS)]
    bins: usize,
    /// Soft-binning temperature of the sb-ece objective.
    #[arg(long, default_value_t = 0.01)]
    bin_temp: f64,
    #[arg(long, default_value_t = EVAL_P)]
    p: f64,
    #[arg(long, value_enum, default_value = "label-binned")]
    mode: ModeArg,
    /// Write every evaluated (temperature, objective) pair here as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReliabilityArgs {
    #[arg(long)]
    logits: PathBuf,
    #[arg(long, default_value_t = EVAL_BINS)]
    bins: usize,
    #[arg(long, value_enum, default_value = "equal-mass")]
    scheme: SchemeArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed and the environment.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn exit_code(err: &CalrefError) -> u8 {
    match err {
        CalrefError::Ingest(_) | CalrefError::Parse { .. } | CalrefError::Io(_) => EXIT_DATA,
        CalrefError::Config(_) | CalrefError::Domain(_) => EXIT_USAGE,
        _ => EXIT_INTERNAL,
    }
}

/// Parses `args` (program name first) and runs the command. `env_seed` is the
/// value of [`SEED_ENV`], if set.
pub fn run<I, T>(args: I, env_seed: Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Metrics(a) => cmd_metrics(&a, out),
        Command::Recalibrate(a) => cmd_recalibrate(&a, out),
        Command::Reliability(a) => cmd_reliability(&a, out),
        Command::Train(a) => resolve_seed(a.seed, env_seed.as_deref()).and_then(|s| cmd_train(&a, s, out)),
        Command::Sweep(a) => resolve_seed(a.seed, env_seed.as_deref()).and_then(|s| cmd_sweep(&a, s, out)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<Option<u64>> {
    match (flag, env) {
        (Some(s), _) => Ok(Some(s)),
        (None, Some(v)) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CalrefError::Config(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer"))),
        (None, None) => Ok(None),
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CalrefError::Config(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn pct(x: f64) -> f64 {
    100.0 * x
}

#[derive(Debug, Serialize)]
struct FileMetrics {
    n: usize,
    classes: usize,
    ece_pct: f64,
    accuracy: f64,
    mean_confidence: f64,
    mean_entropy: f64,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    bins: usize,
    p: f64,
    scheme: &'static str,
    mode: EceMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    bin_temperature: Option<f64>,
    #[serde(flatten)]
    metrics: FileMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    val: Option<FileMetrics>,
}

enum EceMethod {
    Hard(BinningSpec),
    Soft(SoftBinningSpec),
}

fn file_metrics(s: &PredictionSummary, method: &EceMethod, p: f64, mode: EceMode) -> Result<FileMetrics> {
    let value = match method {
        EceMethod::Hard(spec) => ece(s, spec, p, mode)?.value,
        EceMethod::Soft(spec) => sb_ece(s, spec, p, mode)?.value,
    };
    Ok(FileMetrics {
        n: s.len(),
        classes: s.num_classes(),
        ece_pct: pct(value),
        accuracy: s.accuracy(),
        mean_confidence: s.mean_confidence(),
        mean_entropy: s.mean_entropy(),
    })
}

fn load_summary(path: &Path) -> Result<PredictionSummary> {
    summarize(&read_logits_file(path)?, 1.0)
}

fn cmd_metrics(a: &MetricsArgs, out: &mut dyn Write) -> Result<()> {
    let (method, scheme) = if a.soft {
        if matches!(a.scheme, Some(SchemeArg::EqualMass)) {
            return Err(CalrefError::Config("soft binning uses equal-width centers".into()));
        }
        (EceMethod::Soft(SoftBinningSpec::new(a.bins, a.bin_temp)?), "soft")
    } else {
        let scheme = a.scheme.unwrap_or(SchemeArg::EqualMass);
        let name = match scheme {
            SchemeArg::EqualMass => "equal-mass",
            SchemeArg::EqualWidth => "equal-width",
        };
        (EceMethod::Hard(BinningSpec::new(scheme.into(), a.bins)?), name)
    };
    if !(a.p >= 1.0 && a.p.is_finite()) {
        return Err(CalrefError::Config(format!("--p must be >= 1, got {}", a.p)));
    }
    let mode = a.mode.into();
    let metrics = file_metrics(&load_summary(&a.logits)?, &method, a.p, mode)?;
    let val = match &a.val_logits {
        Some(path) => Some(file_metrics(&load_summary(path)?, &method, a.p, mode)?),
        None => None,
    };
    write_json(
        out,
        &MetricsReport {
            bins: a.bins,
            p: a.p,
            scheme,
            mode,
            bin_temperature: a.soft.then_some(a.bin_temp),
            metrics,
            val,
        },
    )
}

/// ECE fields are percentages under the evaluation convention on the test file.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct RecalibrationReport {
    objective: TsObjective,
    t_star: f64,
    objective_value: f64,
    evaluations: usize,
    ece_before: f64,
    ece_after: f64,
}

fn cmd_recalibrate(a: &RecalibrateArgs, out: &mut dyn Write) -> Result<()> {
    let objective = match a.objective {
        ObjectiveArg::Nll => TsObjective::Nll,
        ObjectiveArg::SbEce => TsObjective::SbEce {
            bins: a.bins,
            bin_temperature: a.bin_temp,
            p: a.p,
            mode: a.mode.into(),
        },
    };
    let val = read_logits_file(&a.val_logits)?;
    let test = read_logits_file(&a.test_logits)?;
    if val.num_classes() != test.num_classes() {
        return Err(CalrefError::Ingest(format!(
            "validation file has {} classes, test file {}",
            val.num_classes(),
            test.num_classes()
        )));
    }
    let fit = fit_temperature(&val, objective)?;
    if let Some(path) = &a.trace {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(["temperature", "objective"]).map_err(csv_error)?;
        for (t, v) in &fit.trace {
            w.write_record([format!("{t:?}"), format!("{v:?}")])
                .map_err(csv_error)?;
        }
        w.flush()?;
    }
    write_json(
        out,
        &RecalibrationReport {
            objective,
            t_star: fit.t_star,
            objective_value: fit.objective_value,
            evaluations: fit.trace.len(),
            ece_before: pct(evaluation_ece(&summarize(&test, 1.0)?)),
            ece_after: pct(evaluation_ece(&summarize(&test, fit.t_star)?)),
        },
    )
}

fn csv_error(e: csv::Error) -> CalrefError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CalrefError::Io(io),
        other => CalrefError::Ingest(format!("{other:?}")),
    }
}

fn cmd_reliability(a: &ReliabilityArgs, out: &mut dyn Write) -> Result<()> {
    let spec = BinningSpec::new(a.scheme.into(), a.bins)?;
    let table = reliability_table(&load_summary(&a.logits)?, &spec)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in &table.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<(RunConfig, SyntheticTask)> {
    let mut config = load_run_config(path)?;
    if let Some(s) = seed {
        config.train.seed = s;
    }
    let task = make_synthetic_task(config.task, config.samples, config.train.seed)?;
    Ok((config, task))
}

#[derive(Debug, Serialize)]
struct EpochLine {
    epoch: usize,
    learning_rate: f64,
    train_loss: Option<f64>,
    val_accuracy: f64,
    val_ece_pct: f64,
}

#[derive(Debug, Serialize)]
struct TestLine {
    n: usize,
    accuracy: f64,
    /// Evaluation convention: equal-mass, 15 bins, p = 2.
    ece_pct: f64,
    /// With the configured binning, p = 2, binned.
    binned_ece_pct: f64,
    nll: f64,
    mean_confidence: f64,
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    config: &'a RunConfig,
    architecture: &'a [usize],
    batches_per_epoch: usize,
    skipped_batches: usize,
    skipped: &'a [crate::trainer::SkippedBatch],
    epochs: Vec<EpochLine>,
    test: TestLine,
}

fn run_report<'a>(
    config: &'a RunConfig,
    report: &'a TrainReport,
    test_set: &EvalSet,
    m: EvalMetrics,
) -> Result<RunReport<'a>> {
    let binned = ece(&summarize(test_set, 1.0)?, &config.binning, EVAL_P, EceMode::Binned)?.value;
    Ok(RunReport {
        config,
        architecture: &report.architecture,
        batches_per_epoch: report.batches_per_epoch,
        skipped_batches: report.skipped.len(),
        skipped: &report.skipped,
        epochs: report
            .epochs
            .iter()
            .map(|e| EpochLine {
                epoch: e.epoch,
                learning_rate: e.learning_rate,
                train_loss: e.train_loss,
                val_accuracy: e.val_accuracy,
                val_ece_pct: pct(e.val_ece),
            })
            .collect(),
        test: TestLine {
            n: m.n,
            accuracy: m.accuracy,
            ece_pct: pct(m.ece),
            binned_ece_pct: pct(binned),
            nll: m.nll,
            mean_confidence: m.mean_confidence,
        },
    })
}

fn cmd_train(a: &TrainArgs, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let (config, task) = load_config(&a.config, seed)?;
    let report = train(&task.train, &task.val, &config.train)?;
    let metrics = evaluate(&report.model, &task.test)?;
    let test_set = predict(&report.model, &task.test)?;
    let summary = run_report(&config, &report, &test_set, metrics)?;

    fs::create_dir_all(&a.out)?;
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| CalrefError::Config(e.to_string()))?;
    json.push('\n');
    fs::write(a.out.join("report.json"), json)?;
    fs::write(a.out.join("model.bin"), report.model.to_bytes())?;
    write_logits_file(&a.out.join("test_logits.csv"), &test_set)?;
    write_json(out, &summary.test)
}

fn cmd_sweep(a: &SweepArgs, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let (config, task) = load_config(&a.config, seed)?;
    let grid = load_sweep_grid(&a.grid)?;
    let result = sweep_one_at_a_time(&config.train, &grid, |c| {
        let r = train(&task.train, &task.val, c)?;
        let last = r.final_epoch();
        Ok(SweepOutcome {
            val_accuracy: last.val_accuracy,
            val_ece: last.val_ece,
        })
    })?;

    fs::create_dir_all(&a.out)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(a.out.join("results.csv"))
        .map_err(csv_error)?;
    for row in &result.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    let selected = RunConfig {
        train: result.selected,
        ..config
    };
    let mut json = serde_json::to_string_pretty(&selected).map_err(|e| CalrefError::Config(e.to_string()))?;
    json.push('\n');
    fs::write(a.out.join("selected.json"), json)?;
    write_json(out, &selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("9")).unwrap(), Some(3));
        assert_eq!(resolve_seed(None, Some(" 9 ")).unwrap(), Some(9));
        assert_eq!(resolve_seed(None, None).unwrap(), None);
        assert!(resolve_seed(None, Some("-1")).is_err());
    }

    #[test]
    fn usage_errors_exit_64() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["calref", "bogus"], None, &mut out, &mut err), EXIT_USAGE);
        assert_eq!(run(["calref", "metrics"], None, &mut out, &mut err), EXIT_USAGE);
        assert_eq!(
            run(
                ["calref", "metrics", "--logits", "x", "--scheme", "diagonal"],
                None,
                &mut out,
                &mut err
            ),
            EXIT_USAGE
        );
        assert_eq!(run(["calref", "--help"], None, &mut out, &mut err), EXIT_OK);
    }

    #[test]
    fn error_classes() {
        assert_eq!(
            exit_code(&CalrefError::Parse {
                line: 1,
                message: String::new()
            }),
            EXIT_DATA
        );
        assert_eq!(exit_code(&CalrefError::Config(String::new())), EXIT_USAGE);
        assert_eq!(
            exit_code(&CalrefError::Divergence {
                epoch: 0,
                batch: 0,
                loss: 0.0
            }),
            EXIT_INTERNAL
        );
    }
}
