use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use coadain::datasets::write_synthetic_dataset;
use coadain_cli::eval::{EvalArgs, Protocol};
use coadain_cli::translate::{Resample, TranslateArgs};
use coadain_cli::{eval, gallery, train, translate};

#[derive(Parser)]
#[command(version, about = "RGB-to-thermal translation with per-component style control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset of vehicle scenes.
    MakeSynthetic {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        num_scenes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model from a run config.
    Train {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Run directory; defaults to $COADAIN_RUN_ROOT/<run_name> or runs/<run_name>.
        #[arg(long, value_name = "DIR")]
        run_dir: Option<PathBuf>,
        /// Continue from this checkpoint up to the configured iteration count.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
    },
    /// Translate RGB images (with segmentations) to thermal under sampled styles.
    Translate {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Directory with rgb/ and seg/ subdirectories.
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        num_styles: u64,
        #[arg(long, value_enum, default_value_t = Resample::Vehicles)]
        resample: Resample,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an evaluation protocol and write its JSON report.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Run config; defaults to the one stored in the checkpoint.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Test dataset root; defaults to [data] test.
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        which: Protocol,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        num_sources: Option<usize>,
        #[arg(long)]
        num_pairs: Option<usize>,
        #[arg(long)]
        samplings: Option<usize>,
        /// Score the dataset's real thermal images instead of translations.
        #[arg(long)]
        real_vs_real: bool,
        /// Report path; a results.csv row is appended beside it.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Compose per-source grids from a translate output directory.
    Gallery {
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::MakeSynthetic { out, num_scenes, seed } => {
            let manifest = write_synthetic_dataset(&out, num_scenes as usize, seed)?;
            println!("wrote {} scenes to {}", manifest.num_scenes, out.display());
        }
        Command::Train {
            config,
            run_dir,
            resume,
        } => {
            train::run(&config, run_dir.as_deref(), resume.as_deref())?;
        }
        Command::Translate {
            checkpoint,
            input,
            out,
            num_styles,
            resample,
            seed,
        } => {
            let failures = translate::run(&TranslateArgs {
                checkpoint: &checkpoint,
                input: &input,
                out: &out,
                num_styles: num_styles as usize,
                resample,
                seed,
            })?;
            if failures > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Eval {
            checkpoint,
            config,
            dataset,
            which,
            seed,
            num_sources,
            num_pairs,
            samplings,
            real_vs_real,
            out,
        } => {
            eval::run(&EvalArgs {
                checkpoint,
                config,
                dataset,
                which,
                seed,
                num_sources,
                num_pairs,
                samplings,
                real_vs_real,
                out,
            })?;
        }
        Command::Gallery { run, out } => {
            gallery::run(&run, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
