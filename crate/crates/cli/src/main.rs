use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use horizonctl_cli::commands::{EXIT_CONFIG, EXIT_OK};
use horizonctl_cli::{cmd_oracle, cmd_solve, cmd_sweep, cmd_verify, scenarios, CliError, RunConfig};

/// Finite-horizon tracking control: solve, sweep horizons, verify optimality.
#[derive(Parser)]
#[command(name = "horizonctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Config file with dotted keys.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Bundled scenario name (see `horizonctl scenarios`).
    #[arg(long)]
    scenario: Option<String>,
    /// Overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate and print the resolved plan without solving.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at a single horizon.
    Solve(Source),
    /// Run the horizon ladder.
    SweepHorizon {
        #[command(flatten)]
        source: Source,
        /// Output directory of an earlier sweep whose converged levels are kept.
        #[arg(long)]
        resume_from: Option<PathBuf>,
    },
    /// Run the enabled optimality and stability checks.
    Verify {
        #[command(flatten)]
        source: Source,
        /// Control dump to check instead of a fresh solve.
        #[arg(long)]
        control: Option<PathBuf>,
        /// Shift the control by this constant before checking.
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
    },
    /// Dense reference computation on a tiny instance.
    Oracle(Source),
    /// List bundled scenarios, or print one.
    Scenarios { name: Option<String> },
}

fn resolve(s: &Source) -> Result<RunConfig, CliError> {
    let mut cfg = match (&s.config, &s.scenario) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => scenarios::load(name)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(out) = &s.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

type Action<'a> = Box<dyn Fn(&RunConfig) -> Result<(), CliError> + 'a>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (source, action): (&Source, Action<'_>) = match &cli.command {
        Command::Scenarios { name: None } => {
            scenarios::names().for_each(|n| println!("{n}"));
            return Ok(());
        }
        Command::Scenarios { name: Some(n) } => {
            let text = scenarios::text(n).ok_or_else(|| horizonctl_cli::ConfigError::UnknownScenario(n.clone()))?;
            print!("{text}");
            return Ok(());
        }
        Command::Solve(s) => (s, Box::new(cmd_solve)),
        Command::SweepHorizon { source, resume_from } => (
            source,
            Box::new(move |c: &RunConfig| cmd_sweep(c, resume_from.as_deref())),
        ),
        Command::Verify {
            source,
            control,
            perturb,
        } => (
            source,
            Box::new(move |c: &RunConfig| cmd_verify(c, control.as_deref(), *perturb)),
        ),
        Command::Oracle(s) => (s, Box::new(cmd_oracle)),
    };
    let cfg = resolve(source)?;
    if matches!(cli.command, Command::SweepHorizon { .. }) {
        cfg.plan().map_err(|e| horizonctl_cli::ConfigError::Invalid {
            key: "horizon".into(),
            message: e.to_string(),
        })?;
    }
    if source.dry_run {
        print!("{}", cfg.describe());
        return Ok(());
    }
    action(&cfg)
}

fn main() -> ExitCode {
    horizonctl::init_thread_pool();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("horizonctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
