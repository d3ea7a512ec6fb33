use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wdirl::experiment::{
    exit_code, parse_seeds, run_collapse, run_sweep, run_train, ExperimentConfig, RunOptions, EXIT_GRADCHECK,
};
use wdirl::gradcheck::{run_gradcheck, DEFAULT_CONFIGS};
use wdirl::{Error, Result};

#[derive(Parser)]
#[command(name = "wdirl", version, about = "Label-shift-aware domain-invariant representation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured variant and write mean/std accuracy per variant.
    Train(Common),
    /// Relative improvement over SO across a grid of target priors.
    SweepShift(Common),
    /// Per-epoch majority-class fraction and accuracy at a large alpha.
    CollapseDemo(Common),
    /// Finite-difference check of every op, loss, layer and objective.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// CSV destination; defaults to the config's `output`, else stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Comma-separated seeds overriding the config, e.g. "1,2,3".
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// The first seed drives the random configurations.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CONFIGS)]
    configs: usize,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn experiment(args: &Common, run: fn(&ExperimentConfig, &RunOptions) -> Result<String>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    let opts = RunOptions { threads: args.threads };
    let csv = run(&cfg, &opts)?;
    write_output(args.out.as_deref().or(cfg.output.as_deref()), &csv)
}

fn gradcheck(args: &GradcheckArgs) -> Result<bool> {
    if args.configs == 0 {
        return Err(Error::Config {
            field: "configs".into(),
            message: "must be at least 1".into(),
        });
    }
    let seed = match &args.seeds {
        Some(s) => parse_seeds(s)?[0],
        None => 0,
    };
    let report = run_gradcheck(args.configs, seed)?;
    write_output(args.out.as_deref(), &format!("{report}\n"))?;
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(a) => experiment(a, |c, o| run_train(c, o).map(|t| t.to_csv())),
        Command::SweepShift(a) => experiment(a, |c, o| run_sweep(c, o).map(|t| t.to_csv())),
        Command::CollapseDemo(a) => experiment(a, |c, o| run_collapse(c, o).map(|t| t.to_csv())),
        Command::Gradcheck(a) => match gradcheck(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("gradient check failed");
                return ExitCode::from(EXIT_GRADCHECK as u8);
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
