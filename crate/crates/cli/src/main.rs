//! `bytesgan`: preprocess captures, train, evaluate, classify and run
//! experiment grids.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or format error,
//! 4 numerical divergence.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bytesgan::exec::Exec;

#[derive(Parser)]
#[command(name = "bytesgan", version, about = "Semi-supervised GAN traffic classification from raw packet bytes")]
struct Cli {
    /// Worker threads for data-parallel passes; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Sgan,
    Cnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Exp1,
    Exp2,
    Synthetic,
}

#[derive(Subcommand)]
enum Command {
    /// Convert labeled captures into a PBV dataset file.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Filter policy JSON overriding the config's `filter` section.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the semi-supervised GAN or the CNN baseline.
    Train {
        arch: Arch,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Predict a class for every kept packet of a capture.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pcap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run an experiment grid.
    Experiment {
        which: Experiment,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Dataset for exp1 and exp2; the synthetic benchmark generates its own.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> bytesgan::Result<()> {
    let exec = if cli.jobs == Some(1) { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Preprocess { manifest, out, policy, config } => commands::preprocess(exec, &manifest, &out, policy.as_deref(), config.as_deref()),
        Command::Train {
            arch,
            dataset,
            config,
            out_dir,
            seed,
        } => match arch {
            Arch::Sgan => commands::train_sgan(exec, &dataset, config.as_deref(), &out_dir, seed),
            Arch::Cnn => commands::train_cnn(exec, &dataset, config.as_deref(), &out_dir, seed),
        },
        Command::Eval { model, dataset, report } => commands::eval(exec, &model, &dataset, &report),
        Command::Classify { model, pcap, out, config } => commands::classify(exec, &model, &pcap, &out, config.as_deref()),
        Command::Experiment {
            which,
            config,
            out_dir,
            dataset,
        } => {
            let which = match which {
                Experiment::Exp1 => commands::Grid::Exp1,
                Experiment::Exp2 => commands::Grid::Exp2,
                Experiment::Synthetic => commands::Grid::Synthetic,
            };
            commands::experiment(exec, which, config.as_deref(), &out_dir, dataset.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.jobs.filter(|&n| n > 1) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    if cli.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
