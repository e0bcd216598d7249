//! Thin CLI: argument parsing only, all logic lives in the library.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 failed
//! pass criteria in `diagnose`.

use std::path::PathBuf;
use std::process::exit;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use vqprobe::cli;
use vqprobe::stats::AnalysisUnit;

#[derive(Parser)]
#[command(name = "vqprobe", version, about = "Vector-quantization probe for latent token stores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic latent store from a spec JSON
    Gen {
        /// synth spec JSON path
        spec: PathBuf,
        /// output store base path (.json/.bin pair)
        #[arg(long)]
        out: PathBuf,
        /// override the spec's RNG seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the quantizer on a store
    Train {
        /// store base path
        store: PathBuf,
        /// train config JSON (defaults apply when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// output directory for checkpoint.json and train_log.csv
        #[arg(long)]
        out: PathBuf,
        /// override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the diagnostic battery against a trained checkpoint
    Diagnose {
        /// store base path
        store: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// interventions JSON; omitting it runs training/H1 sections only
        #[arg(long)]
        interventions: Option<PathBuf>,
        /// analysis unit for the pass table: video | token
        #[arg(long, default_value = "video")]
        unit: String,
        /// output directory for report.json and dictionary.json
        #[arg(long)]
        out: PathBuf,
        /// seed for the noise baseline
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// number of noise vectors for the baseline
        #[arg(long)]
        baseline_count: Option<usize>,
    },
    /// Train every config in a grid file and classify the outcomes
    Ablate {
        /// store base path
        store: PathBuf,
        /// grid JSON: {"configs": [train configs...]}
        #[arg(long)]
        grid: PathBuf,
        /// output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG plots from a training CSV or a report JSON
    Plot {
        /// train_log.csv or report.json
        input: PathBuf,
        /// output directory for the SVG files
        #[arg(long)]
        out: PathBuf,
        /// codebook size for the perplexity reference lines
        #[arg(long, default_value_t = 8)]
        k: usize,
    },
}

fn run(command: Command) -> vqprobe::Result<i32> {
    match command {
        Command::Gen { spec, out, seed } => {
            cli::cmd_gen(&spec, &out, seed)?;
            Ok(0)
        }
        Command::Train { store, config, out, seed } => {
            cli::cmd_train(&store, config.as_deref(), &out, seed)?;
            Ok(0)
        }
        Command::Diagnose { store, checkpoint, interventions, unit, out, seed, baseline_count } => {
            let unit = AnalysisUnit::parse(&unit)?;
            let pass = cli::cmd_diagnose(
                &store,
                &checkpoint,
                interventions.as_deref(),
                &out,
                unit,
                seed,
                baseline_count,
            )?;
            Ok(if pass { 0 } else { 3 })
        }
        Command::Ablate { store, grid, out } => {
            cli::cmd_ablate(&store, &grid, &out)?;
            Ok(0)
        }
        Command::Plot { input, out, k } => {
            cli::cmd_plot(&input, &out, k)?;
            Ok(0)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            exit(code);
        }
    };
    match run(cli.command) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    }
}
