//! Command-line front end: market documents, claim documents and the
//! `tcpp` command set.

pub mod claim;
pub mod commands;
pub mod cut;
pub mod file;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use claim::ClaimFile;
pub use commands::{run_command, Failure, Request};
pub use file::{InputError, Market, MarketFile};
pub use report::{Format, Report};

/// Overrides the selection-enumeration cap.
pub const MAX_ENUM_VAR: &str = "TCPP_MAX_ENUM";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT_ERROR: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandName {
    /// Bid and ask of a claim at a stopping time.
    Price,
    /// Axioms, time consistency, cocycle and non-degeneracy.
    CheckTcpp,
    /// Four-way no-free-lunch verdict with its certificate.
    Nfl,
    /// Price bounds from the reference assets.
    Bounds,
    /// Equivalent martingale measure inside every quote band.
    Calibrate,
    /// Whether the model reproduces the reference asset dynamics.
    Extends,
    /// Price under hedging constraints.
    Constrained,
    /// American price of a payoff process.
    American,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundsKind {
    Mme,
    Calibrated,
    GoodDeal,
}

#[derive(Debug, Parser)]
#[command(name = "tcpp", version, about = "Time-consistent bid-ask pricing on finite event trees")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CommandName,
    /// Market document (TOML).
    #[arg(long)]
    pub market: PathBuf,
    /// Claim document (TOML).
    #[arg(long)]
    pub claim: Option<PathBuf>,
    /// Stopping time: root, leaves, t=K or nodes=a,b,...
    #[arg(long)]
    pub at: Option<String>,
    /// Seed of every randomized check.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance of the sampled checks.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Uniform good-deal cap; overrides the document's caps.
    #[arg(long)]
    pub good_deal_cap: Option<f64>,
    /// Which bounds to compute.
    #[arg(long, value_enum, default_value_t = BoundsKind::Mme)]
    pub kind: BoundsKind,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

/// What the process should print and return.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    fn input_error(e: impl std::fmt::Display) -> Self {
        Output { code: EXIT_INPUT_ERROR, stdout: String::new(), stderr: format!("error: {e}\n") }
    }
}

/// Run a parsed command line. `max_enum` is the value of [`MAX_ENUM_VAR`].
pub fn run(cli: &Cli, max_enum: Option<&str>) -> Output {
    let mut market = match MarketFile::read(&cli.market).and_then(|f| f.build()) {
        Ok(m) => m,
        Err(e) => return Output::input_error(e),
    };
    if let Some(v) = max_enum {
        match v.trim().parse::<u64>() {
            Ok(cap) => market.settings.enumeration_cap = cap,
            Err(_) => return Output::input_error(InputError::new(MAX_ENUM_VAR, format!("{v:?} is not a count"))),
        }
    }
    if !(cli.tol.is_finite() && cli.tol >= 0.0) {
        return Output::input_error(InputError::new("--tol", format!("{} is not a tolerance", cli.tol)));
    }
    let claim = match cli.claim.as_deref().map(ClaimFile::read).transpose() {
        Ok(c) => c,
        Err(e) => return Output::input_error(e),
    };
    let req = Request {
        command: cli.command,
        claim,
        at: cli.at.clone(),
        seed: cli.seed,
        tol: cli.tol,
        good_deal_cap: cli.good_deal_cap,
        kind: cli.kind,
    };
    match run_command(&market, &req) {
        Ok(report) => Output {
            code: if report.passed { EXIT_PASS } else { EXIT_CHECK_FAILED },
            stdout: report.render(cli.format),
            stderr: String::new(),
        },
        Err(Failure::Input(e)) => Output::input_error(e),
        Err(Failure::Engine(e @ tcpp_core::Error::InconsistentVerdicts(_))) => {
            Output { code: EXIT_CHECK_FAILED, stdout: String::new(), stderr: format!("error: {e}\n") }
        }
        Err(Failure::Engine(e)) => Output::input_error(e),
    }
}
