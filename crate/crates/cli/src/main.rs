//! `deforest`: synthetic scenes, calibration, filter bench, baseline fit,
//! confirmed-alert detection and evaluation as subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
//! Failures print a JSON error record to stderr and write it to
//! `<out>/error.json`.

mod commands;
mod config;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deforest_core::Error as CoreError;
use serde::Serialize;

use config::PipelineConfig;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "data",
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            kind: "internal",
            message: message.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    status: &'static str,
    command: &'a str,
    exit_code: u8,
    kind: &'static str,
    message: &'a str,
}

#[derive(Parser)]
#[command(name = "deforest", version, about = "SAR time-series deforestation alerts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with known clearcut events
    Synth(Common),
    /// Convert sigma0 to gamma0 using the local incidence angle
    Calibrate(Common),
    /// Score filter combinations into scores.csv
    Bench(Common),
    /// Filter, fit the forest baseline and write normality.csv
    Fit(Common),
    /// Run the confirmed-alert detector into alerts.csv and series dumps
    Detect(Common),
    /// Score alerts against reference dates into evaluation.json
    Evaluate(Common),
    /// Run every stage in order
    Pipeline(Common),
}

/// Flags shared by every subcommand; each overrides the matching config key.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON pipeline config
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Seed for scene generation
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap
    #[arg(long)]
    threads: Option<usize>,
    /// Input stack directory
    #[arg(long)]
    stack: Option<PathBuf>,
    /// Invariant-forest sample CSV
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Cleared-forest sample CSV
    #[arg(long)]
    cleared: Option<PathBuf>,
    /// Bands to process, comma separated
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<String>>,
    /// Filter combination such as `qy-median9+frost9`, or `bench`
    #[arg(long)]
    combination: Option<String>,
    /// Significance level; repeat for several
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    /// Consecutive breaches needed for an alert
    #[arg(long)]
    confirmation: Option<usize>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Synth(c) => ("synth", c),
            Command::Calibrate(c) => ("calibrate", c),
            Command::Bench(c) => ("bench", c),
            Command::Fit(c) => ("fit", c),
            Command::Detect(c) => ("detect", c),
            Command::Evaluate(c) => ("evaluate", c),
            Command::Pipeline(c) => ("pipeline", c),
        }
    }
}

fn resolve_config(flags: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $flag:expr),* $(,)?) => {
            $(if let Some(v) = $flag.clone() { cfg.$field = Some(v); })*
        };
    }
    set!(
        out <- flags.out,
        seed <- flags.seed,
        threads <- flags.threads,
        stack <- flags.stack,
        forest_samples <- flags.forest,
        cleared_samples <- flags.cleared,
        bands <- flags.bands,
    );
    if let Some(c) = &flags.combination {
        cfg.combination = c.clone();
    }
    if !flags.alphas.is_empty() {
        cfg.alphas = flags.alphas.clone();
    }
    if let Some(c) = flags.confirmation {
        cfg.confirmation = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(name: &str, flags: &Common) -> Result<PipelineConfig, (Option<PipelineConfig>, CliError)> {
    let cfg = resolve_config(flags).map_err(|e| (None, e))?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| (Some(cfg.clone()), CliError::internal(e.to_string())))?;
    }
    let _ = fs::remove_file(cfg.out_dir().join("error.json"));
    let result = panic::catch_unwind(AssertUnwindSafe(|| match name {
        "synth" => commands::synth(&cfg),
        "calibrate" => commands::calibrate(&cfg),
        "bench" => commands::bench(&cfg),
        "fit" => commands::fit(&cfg),
        "detect" => commands::detect(&cfg),
        "evaluate" => commands::evaluate_cmd(&cfg),
        _ => commands::pipeline(&cfg),
    }));
    match result {
        Ok(Ok(())) => Ok(cfg),
        Ok(Err(e)) => Err((Some(cfg), e)),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err((Some(cfg), CliError::internal(msg)))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, flags) = cli.command.parts();
    panic::set_hook(Box::new(|_| {}));
    match run(name, flags) {
        Ok(_) => ExitCode::SUCCESS,
        Err((cfg, e)) => {
            let record = ErrorRecord {
                status: "error",
                command: name,
                exit_code: e.code,
                kind: e.kind,
                message: &e.message,
            };
            let json = serde_json::to_string(&record).expect("record serializes");
            eprintln!("{json}");
            if let Some(cfg) = cfg {
                let out = cfg.out_dir();
                if out.is_dir() {
                    let _ = fs::write(out.join("error.json"), json + "\n");
                }
            }
            ExitCode::from(e.code)
        }
    }
}
