use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::{Parser, Subcommand};

use tbb_sim::io::{
    cmd_hysteresis, cmd_phase_diagram, cmd_pulse, cmd_simulate, cmd_steady, parse_config,
    CliError, Outcome, RunConfig,
};

const DEFAULT_CONFIG: &str = include_str!("../../../../configs/default.toml");

#[derive(Parser)]
#[command(name = "tbb-sim", version, about = "Mean-field simulator of collective atom-cavity bistability")]
struct Cli {
    /// Configuration file (TOML); the built-in defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core. Falls back to TBB_SIM_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Steady states and their stability at one point or along a scan.
    Steady,
    /// Phase classification over an (eta, repump) grid.
    PhaseDiagram,
    /// Time evolution under scheduled controls.
    Simulate,
    /// Repeated ramps of one control across the bistable domain.
    Hysteresis,
    /// Square-wave repumping at fixed drive.
    Pulse,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::PhaseDiagram => "phase-diagram",
            Command::Simulate => "simulate",
            Command::Hysteresis => "hysteresis",
            Command::Pulse => "pulse",
        }
    }
}

fn threads(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("TBB_SIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("TBB_SIM_THREADS must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let (text, origin) = match &cli.config {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (DEFAULT_CONFIG.to_string(), "built-in defaults".to_string()),
    };
    parse_config(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = load(cli)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(cli.threads)?)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Steady => cmd_steady(&cfg, &dir),
        Command::PhaseDiagram => cmd_phase_diagram(&cfg, &dir),
        Command::Simulate => cmd_simulate(&cfg, &dir),
        Command::Hysteresis => cmd_hysteresis(&cfg, &dir),
        Command::Pulse => cmd_pulse(&cfg, &dir),
    })
    .inspect(|o| {
        if !cli.quiet {
            for f in &o.files {
                println!("{}", dir.join(f).display());
            }
        }
    })
}

fn main() -> ProcessExit {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            if let Some(m) = &o.message {
                eprintln!("tbb-sim: {m}");
            }
            ProcessExit::from(o.exit as u8)
        }
        Err(e) => {
            eprintln!("tbb-sim: {e}");
            ProcessExit::from(e.exit_code() as u8)
        }
    }
}
