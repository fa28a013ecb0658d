//! Command-line entry point. All command logic lives in `harness::commands`;
//! this file only parses arguments, loads the config, prints results, and
//! maps errors onto process exit codes.

use clap::{Parser, Subcommand, ValueEnum};
use longform_v2a::generator::train::TrainMode;
use longform_v2a::harness::commands::{
    cmd_eval, cmd_generate, cmd_report, cmd_synth, cmd_train, EvalInputs, GenMode,
};
use longform_v2a::harness::config::ExperimentConfig;
use longform_v2a::{Error, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "lfv2a",
    version,
    about = "Desk-scale long-form video-to-audio pipeline: synthetic data, \
             flow-matching training, adapter fusion, and splice metrics."
)]
struct Cli {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-video parallel stages (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliTrainMode {
    FinetuneAll,
    AdaptersOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliGenMode {
    Baseline,
    Adapters,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset.
    Synth {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes `checkpoint/` and `train_log.jsonl`.
    Train {
        /// Dataset directory from `synth`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "finetune-all")]
        mode: CliTrainMode,
        /// Starting checkpoint (freshly initialized when omitted).
        #[arg(long)]
        init_from: Option<PathBuf>,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample long-form latents for every dataset video.
    Generate {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint directory from `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: CliGenMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated latents; writes `report.json` and `splices.csv`.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory from `generate`.
        #[arg(long)]
        generated: PathBuf,
        /// Generated embeddings (LDT + sidecar pairing a reference set).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Generated classifier logits (LDT + sidecar pairing a reference).
        #[arg(long)]
        logits: Option<PathBuf>,
        /// Audio embeddings paired with visual embeddings for the IB score.
        #[arg(long)]
        ib: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare eval reports; the first run is the baseline.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Eval output directories, baseline first.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Print the merged config (defaults when no --config is given).
    Config {
        /// Ignore --config and print the built-in defaults.
        #[arg(long)]
        print_defaults: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Synth { out } => {
            let cfg = load_config(&cli)?;
            let index = cmd_synth(&cfg, out)?;
            println!(
                "synthesized {} videos ({} clips each) under {}",
                index.videos.len(),
                index.dataset.n_clips(),
                out.display()
            );
        }
        Cmd::Train { dataset, mode, init_from, out } => {
            let cfg = load_config(&cli)?;
            let mode = match mode {
                CliTrainMode::FinetuneAll => TrainMode::FinetuneAll,
                CliTrainMode::AdaptersOnly => TrainMode::AdaptersOnly,
            };
            let log = cmd_train(&cfg, dataset, mode, init_from.as_deref(), out)?;
            match log.last() {
                Some(last) => println!(
                    "trained {} steps in {:.1} s, final loss {:.6} -> {}",
                    log.len(),
                    last.wall_ms as f64 / 1e3,
                    last.loss,
                    out.display()
                ),
                None => println!("trained 0 steps -> {}", out.display()),
            }
        }
        Cmd::Generate { dataset, checkpoint, mode, out } => {
            let cfg = load_config(&cli)?;
            let mode = match mode {
                CliGenMode::Baseline => GenMode::Baseline,
                CliGenMode::Adapters => GenMode::Adapters,
            };
            let gi = cmd_generate(&cfg, dataset, checkpoint, mode, out)?;
            println!("generated {} videos ({}) -> {}", gi.videos.len(), gi.mode, out.display());
        }
        Cmd::Eval { dataset, generated, embeddings, logits, ib, out } => {
            let cfg = load_config(&cli)?;
            let inputs = EvalInputs {
                embeddings: embeddings.clone(),
                logits: logits.clone(),
                ib: ib.clone(),
            };
            let report = cmd_eval(&cfg, dataset, generated, &inputs, out)?;
            for (name, value) in &report.metrics {
                match value {
                    Some(v) => println!("{name} = {v:.6}"),
                    None => println!("{name} skipped (no input)"),
                }
            }
            println!("report -> {}", out.join("report.json").display());
        }
        Cmd::Report { out, runs } => {
            let table = cmd_report(runs, out)?;
            println!("{:<26} {:<18} {:>14} {:>10} {:>9}", "metric", "run", "value", "delta", "better");
            for row in &table.rows {
                println!(
                    "{:<26} {:<18} {:>14} {:>10} {:>9}",
                    row.metric,
                    row.run,
                    row.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "skipped".into()),
                    row.delta_pct.map(|d| format!("{d:+.2}%")).unwrap_or_else(|| "-".into()),
                    row.improved.map(|b| if b { "yes" } else { "no" }).unwrap_or("-"),
                );
            }
            println!("comparison -> {}", out.join("report_compare.json").display());
        }
        Cmd::Config { print_defaults } => {
            let cfg = if *print_defaults {
                ExperimentConfig::default()
            } else {
                load_config(&cli)?
            };
            cfg.validate()?;
            println!("{}", cfg.to_pretty_json());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            eprintln!("error: cannot build a {}-thread worker pool: {e}", cli.workers);
            std::process::exit(Error::Contract(String::new()).exit_code());
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
