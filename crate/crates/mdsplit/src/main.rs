use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdsplit::config::ExperimentConfig;
use mdsplit::{commands, CliError};

#[derive(Parser)]
#[command(name = "mdsplit", version, about = "Local split-conformal prediction with model-diagnostic partitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit, calibrate and evaluate one pipeline.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Reuse model artifacts already present in the output directory.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate several pipelines on one shared test set.
    Compare {
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &Path, common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, common: &Common) -> Result<PathBuf, CliError> {
    common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, common } => load(config, common).and_then(|cfg| {
            let path = commands::simulate(&cfg, &out_dir(&cfg, common)?)?;
            println!("wrote {}", path.display());
            Ok(())
        }),
        Command::Run { config, resume, common } => load(config, common).and_then(|cfg| {
            let out = out_dir(&cfg, common)?;
            commands::run(&cfg, &out, *resume)?;
            println!("wrote reports to {}", out.display());
            Ok(())
        }),
        Command::Compare { config, common } => config
            .iter()
            .map(|c| load(c, common))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|cfgs| {
                let out = out_dir(&cfgs[0], common)?;
                for (label, report) in commands::compare(&cfgs, &out)? {
                    for (j, level) in report.levels.iter().enumerate() {
                        println!("{label}\t{level}\tmean {:.4}\tmax {:.4}", report.mean_deviation(j), report.max_deviation(j));
                    }
                }
                Ok(())
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
