//! Command-line front end for the exact CVaR analysis library.

mod commands;
mod demo;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit status of an analysis that ran but came out negative, such as a gap
/// found under `--expect-no-gap`.
pub const EXIT_NEGATIVE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CAP: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cvar-gap", version, about = "Exact static-CVaR analysis of finite-horizon MDPs")]
pub struct Cli {
    /// Directory for CSV/JSON artifacts; nothing is written when unset.
    #[arg(long, global = true, env = "CVARGAP_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct MdpArg {
    /// `hau` for the built-in counterexample, or a path to an MDP JSON file.
    #[arg(long)]
    pub mdp: String,
}

#[derive(clap::Args, Debug, Clone)]
pub struct PolicyArg {
    /// `vi` (discretized value iteration), `threshold` (built-in fixture),
    /// `piK` (K-th enumerated deterministic policy), or a policy JSON path.
    #[arg(long)]
    pub policy: String,
}

#[derive(clap::Args, Debug, Clone)]
pub struct AlphaArg {
    /// Risk level as `p/q` or an exact decimal.
    #[arg(long)]
    pub alpha: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check an MDP file for structural errors.
    Validate {
        #[command(flatten)]
        mdp: MdpArg,
    },
    /// Static CVaR of a policy with an optimal history perturbation.
    EvalStatic {
        #[command(flatten)]
        mdp: MdpArg,
        #[command(flatten)]
        policy: PolicyArg,
        #[command(flatten)]
        alpha: AlphaArg,
    },
    /// The risk-level value recursion at the initial state.
    EvalDp {
        #[command(flatten)]
        mdp: MdpArg,
        #[command(flatten)]
        policy: PolicyArg,
        #[command(flatten)]
        alpha: AlphaArg,
        /// Evaluate under this fixed state-level perturbation instead.
        #[arg(long)]
        fixed_xi: Option<PathBuf>,
        #[arg(long, default_value_t = cvar_gap::risk_dp::DEFAULT_PIECE_CAP)]
        piece_cap: usize,
    },
    /// Value, true static CVaR and their difference, with a certificate.
    Gap {
        #[command(flatten)]
        mdp: MdpArg,
        #[command(flatten)]
        policy: PolicyArg,
        #[command(flatten)]
        alpha: AlphaArg,
        /// Exit with status 1 when the gap is positive.
        #[arg(long)]
        expect_no_gap: bool,
        #[arg(long, default_value_t = cvar_gap::risk_dp::DEFAULT_PIECE_CAP)]
        piece_cap: usize,
        #[arg(long, default_value_t = cvar_gap::consistency::DEFAULT_COMBINATION_CAP)]
        combination_cap: usize,
    },
    /// Consistency report for a supplied history perturbation.
    Check {
        #[command(flatten)]
        mdp: MdpArg,
        #[command(flatten)]
        policy: PolicyArg,
        #[command(flatten)]
        alpha: AlphaArg,
        /// JSON object mapping leaf history ids to rationals.
        #[arg(long)]
        xi: PathBuf,
    },
    /// Discretized CVaR value iteration.
    Vi {
        #[command(flatten)]
        mdp: MdpArg,
        /// `default`, `uniform:K` for multiples of 1/K, or comma-separated rationals.
        #[arg(long, default_value = "default")]
        grid: String,
    },
    /// Optimal regions, action constraints and conflicts across risk levels.
    Uniform {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long, default_value_t = cvar_gap::uniform::DEFAULT_POLICY_CAP)]
        policy_cap: usize,
    },
    /// Run the whole pipeline on the built-in counterexample and check every
    /// anchor value.
    DemoHau,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let code = if err.is_cap_exceeded() { EXIT_CAP } else { EXIT_INPUT };
            let body = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
            eprintln!("{}", serde_json::to_string_pretty(&body).expect("plain data"));
            ExitCode::from(code)
        }
    }
}
