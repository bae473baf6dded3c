use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pullback_mia::harness::{render_report, run_pipeline, run_stage, ExperimentConfig, PipelineStage, ResultStore};
use pullback_mia::Result;

#[derive(Parser)]
#[command(name = "pullback-mia", version, about = "Decoder geometry and geometry-filtered membership inference on toy latent diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or ingest the dataset and write the member/held-out split.
    Generate(Common),
    /// Train the VAE on members and encode every sample.
    TrainVae(Common),
    /// Train the latent noise predictor on member latents.
    TrainLdm(Common),
    /// Decoder distortion (top-K log singular values) for every sample.
    Distortion(Common),
    /// Per-dimension influence for every sample.
    Influence(Common),
    /// Attack scores over the probe-time grid, filtered and unfiltered.
    Attack(Common),
    /// Metrics, quartile strata, baselines and correlations into report.json.
    Evaluate(Common),
    /// Render tables and plots for a run directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory; takes precedence over the config's output directory.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Every stage in order.
    Run(Common),
    /// Print the default config.
    DefaultConfig,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage(common: &Common, stage: PipelineStage) -> Result<()> {
    let cfg = load(common)?;
    let store = ResultStore::create(&cfg)?;
    run_stage(&store, &cfg, stage)?;
    eprintln!("{stage}: done ({})", store.root().display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => stage(&c, PipelineStage::Generate),
        Command::TrainVae(c) => stage(&c, PipelineStage::TrainVae),
        Command::TrainLdm(c) => stage(&c, PipelineStage::TrainLdm),
        Command::Distortion(c) => stage(&c, PipelineStage::Distortion),
        Command::Influence(c) => stage(&c, PipelineStage::Influence),
        Command::Attack(c) => stage(&c, PipelineStage::Attack),
        Command::Evaluate(c) => stage(&c, PipelineStage::Evaluate),
        Command::Report { common, run_dir } => {
            let store = match run_dir {
                Some(dir) => ResultStore::open(&dir)?.0,
                None => ResultStore::create(&load(&common)?)?,
            };
            let rendered = render_report(&store)?;
            println!("{:<6} {:<12} {:>4} {:>8} {:>8} {:>8}", "method", "variant", "t", "AUC", "ASR", "TPR@1%");
            for r in &rendered.rows {
                let t = r.t.map_or_else(String::new, |t| t.to_string());
                println!(
                    "{:<6} {:<12} {:>4} {:>8.2} {:>8.2} {:>8.2}",
                    r.method, r.variant, t, r.auc, r.asr, r.tpr_at_1_fpr
                );
            }
            for (label, d) in [("Mean Δ", rendered.mean_delta), ("Min Δ", rendered.min_delta)] {
                if let Some(d) = d {
                    println!("{label:<24} {:>+8.2} {:>+8.2} {:>+8.2}", d[0], d[1], d[2]);
                }
            }
            Ok(())
        }
        Command::Run(c) => {
            let cfg = load(&c)?;
            let store = run_pipeline(&cfg)?;
            eprintln!("run complete: {} (config {})", store.root().display(), store.config_hash());
            Ok(())
        }
        Command::DefaultConfig => {
            println!("{}", ExperimentConfig::default().to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!("\n  caused by: {s}"));
                source = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
