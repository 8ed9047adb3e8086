use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oodmon_cli::commands::{self, CommandError};
use oodmon_cli::config::Overrides;

/// Construct, optimize, and evaluate runtime OOD monitors for feedforward
/// classifiers.
#[derive(Parser)]
#[command(name = "oodmon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (key = value lines; see README).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for candidate evaluation (default 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Machine-readable output where supported (list).
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the configuration and all referenced inputs.
    Parse,
    /// Evaluate the selected monitors at default parameters (AUROC tables).
    Evaluate,
    /// Optimize the selected monitors and evaluate the winners.
    Optimize,
    /// Write the generated OOD classes of the ID dataset as MNZD files.
    GenerateOod,
    /// List monitor kinds, parameter spaces, OOD classes, and formats.
    List,
}

fn require_config(cli: &Cli) -> Result<PathBuf, CommandError> {
    cli.config.clone().ok_or_else(|| {
        CommandError::Validation(vec![oodmon_cli::Diagnostic::new(
            "<args>",
            None,
            "--config PATH is required for this command",
        )])
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        jobs: cli.jobs,
    };
    if let Some(jobs) = cli.jobs {
        // A failure here means a pool already exists; the run stays valid.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    } else {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }

    let result: Result<(), CommandError> = match &cli.command {
        Command::List => {
            print!("{}", commands::cmd_list(cli.json));
            Ok(())
        }
        Command::Parse => require_config(&cli).and_then(|path| {
            commands::cmd_parse(&path, &overrides).map(|summary| {
                eprintln!(
                    "parse ok: {} monitors, {} OOD classes, splits fit/validation/test = {}/{}/{}, {} network layers",
                    summary.monitors,
                    summary.classes.len(),
                    summary.fit,
                    summary.validation,
                    summary.test,
                    summary.layers
                );
            })
        }),
        Command::Evaluate => require_config(&cli).and_then(|path| {
            commands::cmd_evaluate(&path, &overrides).map(|out| {
                eprintln!("evaluate ok: report written to {}", out.display());
            })
        }),
        Command::Optimize => require_config(&cli).and_then(|path| {
            commands::cmd_optimize(&path, &overrides).map(|out| {
                eprintln!("optimize ok: artifacts written to {}", out.display());
            })
        }),
        Command::GenerateOod => require_config(&cli).and_then(|path| {
            commands::cmd_generate_ood(&path, &overrides).map(|out| {
                eprintln!("generate-ood ok: datasets written to {}", out.display());
            })
        }),
    };

    match result {
        Ok(()) => ExitCode::from(0),
        Err(CommandError::Validation(diags)) => {
            for d in diags {
                eprintln!("error: {d}");
            }
            ExitCode::from(1)
        }
        Err(CommandError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
