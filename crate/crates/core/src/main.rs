//! `trojan-game` command-line front end.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use trojan_game::config::ExperimentConfig;
use trojan_game::error::Error;
use trojan_game::harness;

#[derive(Parser)]
#[command(
    name = "trojan-game",
    about = "Adaptive Trojan-vs-detector co-evolution experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shadow population and the vanilla detector.
    TrainShadows {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the min-max attack (or the static baseline) and evaluate it.
    MmTrojan {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the game: train a static baseline Trojan instead.
        #[arg(long)]
        baseline: bool,
        /// Game iteration count override (0 behaves like --baseline).
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Greedy trigger-set selection plus the poisoning-fraction sweep.
    GreedySelect {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Min-max pipeline at several poisoning ratios.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated poisoning ratios.
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Option<Vec<f64>>,
    },
    /// Compare detectors (meta, NC-lite, STRIP-lite) on baseline vs min-max.
    EvalDetectors {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_config(common: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    let out = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("TROJAN_GAME_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    init_thread_pool();
    match cli.command {
        Command::TrainShadows { common } => {
            let (cfg, out) = load_config(&common)?;
            harness::cmd_train_shadows(&cfg, &out)?;
            println!("shadow population written to {}", out.display());
        }
        Command::MmTrojan {
            common,
            baseline,
            iterations,
        } => {
            let (mut cfg, out) = load_config(&common)?;
            if let Some(iters) = iterations {
                cfg.game.iterations = iters;
            }
            let report = harness::cmd_mm_trojan(&cfg, &out, baseline)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
        }
        Command::GreedySelect { common } => {
            let (cfg, out) = load_config(&common)?;
            let result = harness::cmd_greedy(&cfg, &out)?;
            println!(
                "selected {} of {} candidate samples (alpha = {:.4})",
                result.selected.len(),
                (result.selected.len() as f64 / result.final_alpha.max(1e-12)).round(),
                result.final_alpha
            );
        }
        Command::Ablate { common, alpha_grid } => {
            let (cfg, out) = load_config(&common)?;
            let alphas = alpha_grid.unwrap_or_else(|| vec![0.05, 0.1, 0.25, 0.5]);
            let reports = harness::cmd_ablate(&cfg, &out, &alphas)?;
            for (a, r) in alphas.iter().zip(&reports) {
                println!("alpha={a}: acc={:.4} asr={:.4} auc={:.4}", r.acc, r.asr, r.auc_0);
            }
        }
        Command::EvalDetectors { common } => {
            let (cfg, out) = load_config(&common)?;
            let table = harness::cmd_eval_detectors(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&table).map_err(Error::from)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
