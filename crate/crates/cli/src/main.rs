use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chevron_cli::config::{keys_help, Config};
use chevron_cli::{commands, execute, sweep_plan, CliError, Format, RunCommand};

#[derive(Parser)]
#[command(name = "chevron", version, about = "Chevron amplitude/director solver", after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (flat key = value with [section] headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed of the oscillatory initial condition (initial.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Linear solver (run.solver).
    #[arg(long, global = true, value_parser = ["direct", "cg"])]
    solver: Option<String>,

    /// Number of time steps (run.steps).
    #[arg(long, global = true)]
    steps: Option<u64>,

    /// Override a key, e.g. --set model.h=0.2 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Run once per value on worker threads, e.g. --sweep model.h=0.1,0.2.
    #[arg(long, global = true, value_name = "KEY=V1,V2,...")]
    sweep: Option<String>,

    /// Report format for modes and eigen.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Free run.
    Simulate,
    /// Zero-state stabilization by feedback on the lowest modes.
    Stabilize,
    /// Drive a run toward a free reference trajectory.
    Track,
    /// Stabilization plan, or the 2D mode count with modes.dimension = 2.
    Modes,
    /// Discrete Dirichlet eigenpairs of the grid.
    Eigen {
        /// List only the first COUNT eigenpairs.
        #[arg(long)]
        count: Option<usize>,
    },
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("initial.seed", &seed.to_string())?;
    }
    if let Some(solver) = &cli.solver {
        cfg.set("run.solver", solver)?;
    }
    if let Some(steps) = cli.steps {
        cfg.set("run.steps", &steps.to_string())?;
    }
    for o in &cli.overrides {
        cfg.set_override(o)?;
    }
    Ok(cfg)
}

fn print_summary(out: &std::path::Path, summary: &commands::Summary) {
    println!("output: {}", out.display());
    for (k, v) in summary {
        println!("  {k} = {v}");
    }
}

fn run_one(command: RunCommand, cfg: &Config, out: &std::path::Path) -> i32 {
    match execute(command, cfg, out) {
        Ok(summary) => {
            print_summary(out, &summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let run_command = match cli.command {
        Command::Simulate => Some(RunCommand::Simulate),
        Command::Stabilize => Some(RunCommand::Stabilize),
        Command::Track => Some(RunCommand::Track),
        Command::Modes | Command::Eigen { .. } => None,
    };
    let code = match (run_command, cli.command) {
        (Some(cmd), _) => match &cli.sweep {
            None => run_one(cmd, &cfg, &cli.out),
            Some(spec) => match sweep_plan(&cfg, spec, &cli.out) {
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
                Ok(plan) => std::thread::scope(|scope| {
                    let handles: Vec<_> = plan
                        .iter()
                        .map(|(c, out)| scope.spawn(move || run_one(cmd, c, out)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().unwrap_or(1))
                        .max()
                        .unwrap_or(0)
                }),
            },
        },
        (None, Command::Modes) => report(commands::modes(&cfg, cli.format)),
        (None, Command::Eigen { count }) => report(commands::eigen(&cfg, cli.format, count)),
        (None, _) => unreachable!("run commands handled above"),
    };
    ExitCode::from(code as u8)
}

fn report(result: Result<String, CliError>) -> i32 {
    match result {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
