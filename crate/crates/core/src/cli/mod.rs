//! Command-line front end.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure,
//! 4 config error. Every failure also writes `failure.json` to the output
//! directory when it can be created.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use commands::{Problem, SweepAxis, SweepRange};
pub use config::{ParameterSet, ProblemConfig};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "phasebound", version, about = "Quantum Cramér–Rao bounds and optimal modes for phase objects")]
pub struct Cli {
    /// Problem configuration (flat TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Report cliff integrals and bounds from quadrature (default).
    #[arg(long, global = true, conflicts_with = "first_order")]
    pub exact: bool,
    /// Report cliff integrals and bounds from the constant-field closed forms.
    #[arg(long = "first-order", global = true)]
    pub first_order: bool,
    /// Override a config key, e.g. `--set photons=1e6`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    W,
    Alpha,
    #[value(name = "N", alias = "n")]
    N,
    Dh,
    Dalpha,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantum Fisher matrices, Cramér–Rao bounds and cliff integrals.
    Qfim,
    /// Export the optimal projection modes as CSV.
    Modes,
    /// Detection probabilities at the configured offset.
    Probs,
    /// Monte Carlo photon counting with maximum-likelihood fits.
    Simulate {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Recompute bounds or probabilities along one axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        points: usize,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
    },
    /// Internal consistency checks.
    Validate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Qfim => "qfim",
            Command::Modes => "modes",
            Command::Probs => "probs",
            Command::Simulate { .. } => "simulate",
            Command::Sweep { .. } => "sweep",
            Command::Validate => "validate",
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidWidth(_)
        | Error::InvalidCliffParameters(_)
        | Error::InvalidTable(_)
        | Error::ParameterCount { .. } => EXIT_CONFIG,
        Error::RegimeViolation { .. } => EXIT_VALIDATION,
        _ => EXIT_NUMERICAL,
    }
}

fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

fn hint(e: &Error) -> Option<&'static str> {
    Some(match e {
        Error::DegenerateOmega { .. } => {
            "the parameters cannot be told apart at this reference point; estimate fewer parameters (parameters = \"h\") or change the reference"
        }
        Error::RegimeViolation { .. } => {
            "widen the beam or steepen the cliff so (w*alpha)^-2 < 0.01, or rerun with --exact"
        }
        Error::NonConvergence { .. } => "raise quad_max_subdivisions or loosen quad_rel_tol",
        Error::NegativeProbability { .. } => "reduce delta_h / delta_alpha toward the reference point",
        Error::StepTooLarge { .. } | Error::AmbiguousLimit { .. } => {
            "the finite-difference limit is unstable; check the measurement and the reference point"
        }
        Error::Config(_) => "fix the reported key; see README for the config keys",
        _ => return None,
    })
}

#[derive(Debug, Serialize)]
pub struct FailureRecord {
    pub command: String,
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
    pub hint: Option<String>,
}

pub(crate) fn write_failure(dir: Option<&std::path::Path>, record: &FailureRecord) {
    eprintln!("error: {}", record.message);
    if let Some(h) = &record.hint {
        eprintln!("hint: {h}");
    }
    if let Some(dir) = dir {
        if std::fs::create_dir_all(dir).is_ok() {
            if let Ok(text) = serde_json::to_string_pretty(record) {
                let _ = std::fs::write(dir.join("failure.json"), text + "\n");
            }
        }
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    let command = cli.command.name();
    let fail = |e: Error, dir: Option<&std::path::Path>| -> i32 {
        let code = exit_code(&e);
        write_failure(
            dir,
            &FailureRecord {
                command: command.into(),
                exit_code: code,
                kind: error_kind(&e),
                message: e.to_string(),
                hint: hint(&e).map(String::from),
            },
        );
        code
    };

    let Some(path) = cli.config.as_ref() else {
        return fail(Error::Config("--config PATH is required".into()), cli.out.as_deref());
    };
    let mut config = match ProblemConfig::load(path, &cli.set) {
        Ok(c) => c,
        Err(e) => return fail(e, cli.out.as_deref()),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = config.output_dir.clone();
    // a record left by an earlier failed run would misdescribe this one
    let _ = std::fs::remove_file(out_dir.join("failure.json"));
    let exact = !cli.first_order;

    let result = match &cli.command {
        Command::Qfim => commands::qfim(&config, exact),
        Command::Modes => commands::modes(&config),
        Command::Probs => commands::probs(&config),
        Command::Simulate { trials } => {
            if let Some(t) = trials {
                config.trials = *t;
            }
            commands::simulate(&config)
        }
        Command::Sweep {
            axis,
            from,
            to,
            points,
            log,
        } => SweepRange::new(*from, *to, *points, *log)
            .and_then(|r| commands::sweep(&config, SweepAxis::from(*axis), &r, exact)),
        Command::Validate => commands::validate(&config),
    };
    match result {
        Ok(outcome) => {
            if let Some(record) = outcome.failure {
                write_failure(Some(&out_dir), &FailureRecord {
                    command: command.into(),
                    ..record
                });
            }
            outcome.code
        }
        Err(e) => fail(e, Some(&out_dir)),
    }
}

/// What a command produced besides its files.
pub(crate) struct Outcome {
    pub code: i32,
    pub failure: Option<FailureRecord>,
}

impl Outcome {
    fn ok() -> Self {
        Self {
            code: EXIT_OK,
            failure: None,
        }
    }

    fn failed(code: i32, kind: &str, message: String) -> Self {
        Self {
            code,
            failure: Some(FailureRecord {
                command: String::new(),
                exit_code: code,
                kind: kind.into(),
                message,
                hint: None,
            }),
        }
    }
}
