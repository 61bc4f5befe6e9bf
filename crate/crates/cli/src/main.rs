//! Experiment driver: deterministic CSV reports from TOML configs.
//!
//! Exit codes: 0 all declared checks pass, 1 numerical check failure,
//! 2 usage/parse error, 3 validation failure, 4 I/O error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CommandContext;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "pathwise",
    about = "Probability-free Delta hedging experiments: covariation, terminal-value solves, recursive schemes, hedging and arbitrage probes"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV reports and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (results are identical for any value).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Override the generator seed from the config.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Override the generator/rebalancing level from the config.
    #[arg(long, global = true)]
    level: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Pathwise covariation curves and convergence diagnostics.
    Qv,
    /// Discrete quadratic identities for the basic strategies.
    Integrate,
    /// One backward terminal-value solve.
    Solve,
    /// Recursive-scheme value and Delta.
    Price,
    /// Pathwise Delta-hedging simulation.
    Hedge,
    /// Covariation-mismatch robustness sweep.
    Robust,
    /// Empirical no-arbitrage probe.
    Noarb,
    /// Path-dependent equation residuals and functional self-financing.
    Ftvp,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Qv => "qv",
            Command::Integrate => "integrate",
            Command::Solve => "solve",
            Command::Price => "price",
            Command::Hedge => "hedge",
            Command::Robust => "robust",
            Command::Noarb => "noarb",
            Command::Ftvp => "ftvp",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let Some(config_path) = cli.config.as_ref() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let config = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: creating {}: {e}", cli.out.display());
        return ExitCode::from(4);
    }

    let ctx = CommandContext {
        config: &config,
        out_dir: &cli.out,
        seed_override: cli.seed_override,
        level_override: cli.level,
    };
    let result = match cli.command {
        Command::Qv => commands::run_qv(&ctx),
        Command::Integrate => commands::run_integrate(&ctx),
        Command::Solve => commands::run_solve(&ctx),
        Command::Price => commands::run_price(&ctx),
        Command::Hedge => commands::run_hedge_command(&ctx),
        Command::Robust => commands::run_robust(&ctx),
        Command::Noarb => commands::run_noarb(&ctx),
        Command::Ftvp => commands::run_ftvp(&ctx),
    };
    let outcome = match result {
        Ok(outcome) => outcome,
        Err(e) => {
            // configuration and numerical-domain problems are validation
            // failures; filesystem problems are I/O
            let text = format!("{e:#}");
            eprintln!("error: {text}");
            let code = if text.contains("writing") || text.contains("reading") { 4 } else { 3 };
            return ExitCode::from(code);
        }
    };
    if let Err(e) =
        report::write_manifest(&cli.out, cli.command.name(), &config, ctx.seed(), &outcome)
    {
        eprintln!("error: {e:#}");
        return ExitCode::from(4);
    }
    for check in &outcome.checks {
        println!(
            "{} {}: value {:.6e} {} {:.6e}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.value,
            check.comparison,
            check.threshold
        );
    }
    if outcome.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
