//! Argument parsing and the command runner behind the `detlab` binary.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use detlab_core::experiments::{self, Experiment, ExperimentConfig, RunReport};
use detlab_core::report::trace_csv;
use detlab_core::{BaseKind, Error};
use serde_json::Value;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "detlab", version, about = "Monte Carlo laboratory for the log-determinant CLT")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distribution of the normalized log-determinant against N(0,1).
    Clt(Flags),
    /// KS distance along a grid of n.
    Rate(Flags),
    /// All-atom matrices against matrices with a Gaussian tail block.
    Replace(Flags),
    /// Hybrid ensemble with Taylor and martingale diagnostics.
    Hybrid(Flags),
    /// Every intermediate check on the n grid.
    Lemmas(Flags),
    /// Print the row-by-row decomposition trace of one matrix as CSV.
    Decompose(Flags),
    /// Deterministic identities only (no Monte Carlo).
    Verify(Flags),
}

impl Command {
    pub fn split(self) -> (Experiment, Flags) {
        match self {
            Command::Clt(f) => (Experiment::Clt, f),
            Command::Rate(f) => (Experiment::Rate, f),
            Command::Replace(f) => (Experiment::Replace, f),
            Command::Hybrid(f) => (Experiment::Hybrid, f),
            Command::Lemmas(f) => (Experiment::Lemmas, f),
            Command::Decompose(f) => (Experiment::Decompose, f),
            Command::Verify(f) => (Experiment::Verify, f),
        }
    }
}

/// Overrides for `ExperimentConfig`; one flag per field.
#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Matrix sizes (repeatable).
    #[arg(long = "n", num_args = 1.., value_name = "N")]
    pub n: Vec<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// bernoulli | gaussian | uniform_scaled
    #[arg(long)]
    pub ensemble: Option<String>,
    /// Smoothing weight in [0, 1).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Truncation level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Number of trailing Gaussian rows.
    #[arg(long)]
    pub tail: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Run(Error::Io { .. }) => EXIT_IO,
            CliError::Run(Error::InvalidConfig(_) | Error::DegenerateDistribution { .. }) => EXIT_CONFIG,
            CliError::Run(_) => EXIT_CHECKS_FAILED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

pub const DEFAULT_OUT: &str = "out";

/// Defaults for the experiment, then the JSON file, then the flags.
pub fn merge_config(experiment: Experiment, flags: &Flags) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::defaults(experiment);
    cfg.output_dir = Some(PathBuf::from(DEFAULT_OUT));
    if let Some(path) = &flags.config {
        cfg = apply_file(cfg, path)?;
        // The subcommand names the experiment.
        cfg.experiment = experiment;
    }
    if !flags.n.is_empty() {
        cfg.n_values = flags.n.clone();
    }
    if let Some(t) = flags.trials {
        cfg.trials = t;
    }
    if let Some(s) = flags.seed {
        cfg.master_seed = s;
    }
    if let Some(name) = &flags.ensemble {
        cfg.ensemble.kind = BaseKind::parse(name).ok_or_else(|| {
            CliError::Config(format!(
                "ensemble: unknown kind `{name}` (expected bernoulli, gaussian or uniform_scaled)"
            ))
        })?;
    }
    if flags.eps.is_some() {
        cfg.ensemble.eps = flags.eps;
    }
    if flags.level.is_some() {
        cfg.ensemble.level = flags.level;
    }
    if flags.tail.is_some() {
        cfg.tail_block_override = flags.tail;
    }
    if let Some(w) = flags.workers {
        cfg.workers = w;
    }
    if flags.out.is_some() {
        cfg.output_dir = flags.out.clone();
    }
    cfg.validate().map_err(|e| match e {
        Error::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Config(other.to_string()),
    })?;
    Ok(cfg)
}

fn apply_file(base: ExperimentConfig, path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(file) = file else {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    };
    let mut merged = serde_json::to_value(&base).expect("config serializes");
    let Value::Object(fields) = &mut merged else {
        unreachable!("config serializes to an object");
    };
    for (k, v) in file {
        fields.insert(k, v);
    }
    serde_json::from_value(merged).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses `argv` (including the program name) into an experiment config.
pub fn parse_config<I, T>(argv: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Config(e.to_string()))?;
    let (experiment, flags) = cli.command.split();
    merge_config(experiment, &flags)
}

pub fn print_summary(out: &mut dyn Write, report: &RunReport) -> std::io::Result<()> {
    let cfg = &report.config;
    writeln!(
        out,
        "{}: ensemble={:?} trials={} seed={}",
        cfg.experiment.name(),
        cfg.ensemble,
        cfg.trials,
        cfg.master_seed
    )?;
    for r in &report.per_n {
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        writeln!(
            out,
            "  {:<16} n={:<5} retained={:<5} singular={:<4} ks={} dkw(1e-3)={} mean={} var={}",
            r.label,
            r.n,
            r.retained,
            r.singular_count,
            fmt_opt(r.ks_vs_normal),
            fmt_opt(r.dkw_epsilon),
            fmt_opt(r.mean),
            fmt_opt(r.variance)
        )?;
        for (k, v) in &r.extras {
            writeln!(out, "      {k} = {v:.6}")?;
        }
    }
    for c in &report.checks {
        let tag = if !c.criterion.is_gate() {
            "INFO"
        } else if c.pass {
            "PASS"
        } else {
            "FAIL"
        };
        writeln!(
            out,
            "  [{tag}] {:<26} n={:<5} observed={:.6} predicted={:.6} ({})",
            c.lemma_id,
            c.n,
            c.observed,
            c.predicted,
            c.notes()
        )?;
    }
    writeln!(out, "overall: {}", if report.passed { "pass" } else { "fail" })
}

/// Runs a parsed config, writes outputs and returns the exit code.
pub fn execute(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let io_err = |e: std::io::Error| CliError::Io(e.to_string());
    if cfg.experiment == Experiment::Decompose {
        let trace = experiments::run_decompose(cfg)?;
        stdout.write_all(trace_csv(&trace).as_bytes()).map_err(io_err)?;
        if let Some(dir) = &cfg.output_dir {
            experiments::run(cfg)?.write_summary(dir)?;
        }
        return Ok(EXIT_OK);
    }
    let report = experiments::run(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        report.write_summary(dir)?;
    }
    print_summary(stdout, &report).map_err(io_err)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_CHECKS_FAILED })
}

/// Entry point shared by the binary and the tests.
pub fn run_cli<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    let (experiment, flags) = cli.command.split();
    let result = merge_config(experiment, &flags).and_then(|cfg| execute(&cfg, stdout));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "detlab: {e}");
            e.exit_code()
        }
    }
}
