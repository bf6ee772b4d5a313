//! `deconfound` command-line front end.

mod adjust_cmd;
mod analytic_cmd;
mod config;
mod run_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "deconfound", version, about = "Causality-aware confounding adjustment and stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a replicated stability experiment.
    Run(RunArgs),
    /// Closed-form expected MSE of a fixed linear predictor.
    Analytic(analytic_cmd::AnalyticArgs),
    /// Fit an adjustment model on a training CSV and deconfound CSV features.
    Adjust(adjust_cmd::AdjustArgs),
    /// Moments of the bivariate Bernoulli law given by cell probabilities.
    Moments {
        #[arg(allow_negative_numbers = true)]
        p00: f64,
        #[arg(allow_negative_numbers = true)]
        p01: f64,
        #[arg(allow_negative_numbers = true)]
        p10: f64,
        #[arg(allow_negative_numbers = true)]
        p11: f64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Builtin experiment: regr_exp1, regr_exp2, class_exp1, class_exp2.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    builtin: Option<String>,
    /// Experiment config (TOML), or a manifest written by a previous run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

/// Exit codes: 2 for invalid input, 3 for failures while computing or writing.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<deconfound::Error> for CliError {
    fn from(e: deconfound::Error) -> Self {
        use deconfound::Error as E;
        match e {
            E::InvalidParameter(_)
            | E::InvalidConfig(_)
            | E::InfeasibleMoments { .. }
            | E::InvalidCovariance(_)
            | E::DimensionMismatch(_)
            | E::NotBinary(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, x);
        let (mant, e) = s.split_once('e').expect("exponent form");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        return format!("{mant}e{e}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn moments(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<(), CliError> {
    let probs = deconfound::CellProbs::new(p00, p01, p10, p11)?;
    let m = deconfound::selection::bernoulli_moments(&probs)?;
    println!("var_c {}", fmt_sig(m.var_c, 12));
    println!("var_y {}", fmt_sig(m.var_y, 12));
    println!("cov_cy {}", fmt_sig(m.cov_cy, 12));
    match m.cor_cy {
        Some(c) => println!("cor_cy {}", fmt_sig(c, 12)),
        None => println!("cor_cy undefined"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_cmd::run(args),
        Command::Analytic(args) => analytic_cmd::run(args),
        Command::Adjust(args) => adjust_cmd::run(args),
        Command::Moments { p00, p01, p10, p11 } => moments(p00, p01, p10, p11),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
