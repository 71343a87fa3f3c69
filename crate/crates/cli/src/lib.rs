//! Front end for the `vlcp` binary: configuration, dispatch and artifacts.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Status, UsageError};
use crate::config::{parse_with_overrides, split_override, ConfigErrors};
use crate::output::Artifacts;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "vlcp", version, about = "Contact processes with viral load and their duals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `run.replicas`.
    #[arg(long, global = true)]
    pub replicas: Option<u64>,
    /// Dotted override, e.g. `--set infection.lambda=1.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, env = "VLCP_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Gillespie trajectories with snapshots.
    Simulate,
    /// Survival-proxy estimates over `survival.lambdas`.
    Survival,
    /// Bisection for the critical infection rate, with the classical-CP reference.
    Sweep,
    /// Duality checks: pathwise on shared logs, exact via the oracle, or Monte Carlo.
    Duality {
        /// Overrides `duality.mode` (pathwise, exact, mc).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Exact transient law on a tiny graph.
    Oracle,
    /// Recovery-time tail estimation and classification.
    Tail,
    /// Extinction criterion and series regimes.
    Criteria,
    /// CPLI from the zero state: dormancy at the origin over time.
    Invariant,
    /// Finite-volume truncation distance between a graph and its enlargement.
    Truncation,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Survival => "survival",
            Command::Sweep => "sweep",
            Command::Duality { .. } => "duality",
            Command::Oracle => "oracle",
            Command::Tail => "tail",
            Command::Criteria => "criteria",
            Command::Invariant => "invariant",
            Command::Truncation => "truncation",
        }
    }
}

fn is_validation(e: &anyhow::Error) -> bool {
    e.downcast_ref::<ConfigErrors>().is_some()
        || e.downcast_ref::<UsageError>().is_some()
        || matches!(
            e.downcast_ref::<vlcp_core::Error>(),
            Some(vlcp_core::Error::Invalid(_) | vlcp_core::Error::StateSpaceTooLarge { .. })
        )
}

fn execute(cli: &Cli) -> anyhow::Result<Status> {
    let c = &cli.common;
    let path = c.config.as_ref().ok_or_else(|| UsageError("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("reading {}: {e}", path.display())))?;
    let mut overrides = Vec::new();
    if let Some(seed) = c.seed {
        overrides.push(("run.seed".to_string(), seed.to_string()));
    }
    if let Some(r) = c.replicas {
        overrides.push(("run.replicas".to_string(), r.to_string()));
    }
    if let Command::Duality { mode: Some(m) } = &cli.command {
        overrides.push(("duality.mode".to_string(), format!("\"{m}\"")));
    }
    for s in &c.set {
        overrides.push(split_override(s).map_err(UsageError)?);
    }
    let cfg = parse_with_overrides(&text, &overrides)?;
    let mut art = Artifacts::new(&c.out, cli.command.name(), &cfg)?;
    let status = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut art),
        Command::Survival => commands::survival(&cfg, &mut art),
        Command::Sweep => commands::sweep(&cfg, &mut art),
        Command::Duality { .. } => commands::duality(&cfg, &mut art),
        Command::Oracle => commands::oracle(&cfg, &mut art),
        Command::Tail => commands::tail(&cfg, &mut art),
        Command::Criteria => commands::criteria(&cfg, &mut art),
        Command::Invariant => commands::invariant(&cfg, &mut art),
        Command::Truncation => commands::truncation(&cfg, &mut art),
    }?;
    for p in art.written() {
        eprintln!("wrote {}", p.display());
    }
    Ok(status)
}

/// Parse arguments, run, and map the outcome to the documented exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK });
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads).build_global() {
        eprintln!("warning: thread pool already initialised: {e}");
    }
    match execute(&cli) {
        Ok(Status::Done) => ExitCode::from(EXIT_OK),
        Ok(Status::Inconclusive(why)) => {
            eprintln!("inconclusive: {why}");
            ExitCode::from(EXIT_INCONCLUSIVE)
        }
        Err(e) if is_validation(&e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
