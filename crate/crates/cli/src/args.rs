use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

/// Set-valued Lie brackets, bracket-generating certificates and steering
/// for vector fields of limited regularity.
#[derive(Debug, Parser)]
#[command(name = "setbracket", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the result as a JSON document with its run manifest.
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,
    /// Print the tabular part of the result as CSV.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Write the artifact (JSON, or CSV with `--csv`) to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base RK4 step.
    #[arg(long, global = true)]
    pub flow_step: Option<f64>,
    /// Adaptive-flow error target.
    #[arg(long, global = true)]
    pub flow_tol: Option<f64>,
    /// Use fixed RK4 steps instead of step doubling.
    #[arg(long, global = true)]
    pub flow_fixed: bool,
    /// Radius schedule (comma separated); for `holder` the target radii.
    #[arg(long, global = true, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Samples per radius for set-valued estimates.
    #[arg(long, global = true)]
    pub samples_per_radius: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["system", "field_file"])))]
pub struct SystemArgs {
    /// Built-in system: example-r4, heisenberg, translations-r2.
    #[arg(long)]
    pub system: Option<String>,
    /// One file per field, in order (components separated by ';' or newlines).
    #[arg(long, num_args = 1..)]
    pub field_file: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PointArg {
    /// Base point, comma separated (default: origin).
    #[arg(long, visible_alias = "at", allow_hyphen_values = true)]
    pub point: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TermArgs {
    /// Bracket: a field word such as "[X1,[X1,X2]]", or a formal bracket
    /// together with `--bind`.
    #[arg(long)]
    pub bracket: String,
    /// Variable-to-field assignment, e.g. "1=1,2=1,3=2".
    #[arg(long, visible_alias = "binding")]
    pub bind: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FamilyArg {
    /// Bracket family: an alias (default5, truncated4, heisenberg3,
    /// translations2) or comma separated field words. Defaults to the
    /// system's standard family.
    #[arg(long)]
    pub family: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Formal bracket queries.
    #[command(subcommand)]
    Bracket(BracketCommand),
    /// Certify that a bracket family spans at a point for every selection.
    Certify {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        family: FamilyArg,
        #[command(flatten)]
        point: PointArg,
    },
    /// Construct a piecewise-constant control word reaching a target.
    Steer {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        family: FamilyArg,
        #[command(flatten)]
        point: PointArg,
        /// Target state, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        /// Terminal residual tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
    },
    /// Fit the exponent of minimum steering time against target distance.
    Holder {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        family: FamilyArg,
        #[command(flatten)]
        point: PointArg,
        /// Targets per radius.
        #[arg(long, default_value_t = 40)]
        samples: usize,
        /// Fraction of targets per radius that must converge.
        #[arg(long, default_value_t = 0.8)]
        min_converged: f64,
    },
    /// Sample endpoints of random control words within a time budget.
    Reach {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        point: PointArg,
        /// Largest total duration of a word.
        #[arg(long)]
        budget: f64,
        /// Number of random words.
        #[arg(long, default_value_t = 1000)]
        words: usize,
        /// Largest number of segments per word.
        #[arg(long, default_value_t = 8)]
        max_segments: usize,
    },
    /// Residuals of the leading-order multi-flow expansion.
    VerifyAsymptotic {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        term: TermArgs,
        #[command(flatten)]
        point: PointArg,
        /// Non-zero times, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1e-1,1e-2,1e-3,1e-4")]
        t_grid: Vec<f64>,
    },
    /// Residuals of the generalized difference quotient inequality.
    VerifyGdq {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        term: TermArgs,
        #[command(flatten)]
        point: PointArg,
        /// Grid scales, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
        scales: Vec<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BracketCommand {
    /// Combinatorial data of a formal bracket.
    Analyze {
        /// Formal bracket, e.g. "[[X1,X2],X3]".
        bracket: String,
    },
    /// Estimate the set-valued bracket at a point.
    Set {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        term: TermArgs,
        #[command(flatten)]
        point: PointArg,
    },
}

impl Command {
    /// Name recorded in the run manifest.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bracket(BracketCommand::Analyze { .. }) => "bracket-analyze",
            Command::Bracket(BracketCommand::Set { .. }) => "bracket-set",
            Command::Certify { .. } => "certify",
            Command::Steer { .. } => "steer",
            Command::Holder { .. } => "holder",
            Command::Reach { .. } => "reach",
            Command::VerifyAsymptotic { .. } => "verify-asymptotic",
            Command::VerifyGdq { .. } => "verify-gdq",
        }
    }
}
