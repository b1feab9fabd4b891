use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use flimsod::commands::{self, InferArgs};
use flimsod::service::{self, AppState};
use flimsod::PipelineConfig;
use flimsod_core::decoders::DecoderKind;
use flimsod_core::evalsel::DEFAULT_BETA_SQ;

#[derive(Parser)]
#[command(name = "flimsod", version, about = "Flyweight salient object detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that reads a config.
#[derive(Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Decoder id: ts, at, lt, pb, mb, lm or bp.
    #[arg(long)]
    decoder: Option<DecoderKind>,
    /// Block whose features are decoded (1-based).
    #[arg(long)]
    block: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the encoder from marker files and write the model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output model file (defaults to the config's model path).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also train bp weights on the ground truth and write them here.
        #[arg(long)]
        bp_out: Option<PathBuf>,
    },
    /// Saliency map (and optionally a mask) for one image.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        /// 16-bit saliency PNG; the value range goes to a `.scale` sidecar.
        #[arg(long)]
        out: PathBuf,
        /// Post-processed mask PNG (uses the config's postproc).
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[arg(long)]
        bp_weights: Option<PathBuf>,
    },
    /// Compare predicted masks with ground truth, paired by file stem.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BETA_SQ)]
        beta_sq: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Greedy training-image selection, resumable from its JSON-lines log.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 1)]
        steps: usize,
    },
    /// HTTP service for the annotation UI.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let path = common.config.as_deref().context("--config is required")?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = common.decoder {
        cfg.decoder = d;
    }
    if let Some(b) = common.block {
        cfg.block = b;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, out, bp_out } => {
            let cfg = load_config(&common)?;
            let out = out.unwrap_or_else(|| commands::default_model_path(&cfg));
            let trained = commands::cmd_train(&cfg, &out, bp_out.as_deref())?;
            print!("{}", commands::model_summary(&trained.model));
            println!("model written to {}", out.display());
        }
        Command::Infer {
            common,
            model,
            image,
            out,
            mask_out,
            bp_weights,
        } => {
            let cfg = load_config(&common)?;
            let model = model.unwrap_or_else(|| commands::default_model_path(&cfg));
            let bp = bp_weights.or_else(|| cfg.bp_weights.clone());
            commands::cmd_infer(
                &InferArgs {
                    model: &model,
                    image: &image,
                    decoder: cfg.decoder,
                    block: cfg.block,
                    out: &out,
                    mask_out: mask_out.as_deref(),
                    bp_weights: bp.as_deref(),
                },
                &cfg,
            )?;
        }
        Command::Eval {
            pred,
            gt,
            beta_sq,
            csv,
            json,
        } => {
            let report = commands::cmd_eval(&pred, &gt, beta_sq)?;
            write_or_print(csv.as_deref(), &report.to_csv()?)?;
            if let Some(p) = json {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            eprintln!(
                "{} images: F_beta {:.4} +- {:.4}, MAE {:.4} +- {:.4}",
                report.rows.len(),
                report.f_beta.mean,
                report.f_beta.std,
                report.mae.mean,
                report.mae.std
            );
        }
        Command::Select { common, log, steps } => {
            let cfg = load_config(&common)?;
            let s = commands::cmd_select(&cfg, &log, steps)?;
            println!("training set: {}", s.training.join(", "));
        }
        Command::Serve { common, port, host } => {
            let cfg = load_config(&common)?;
            let app = AppState::open(cfg)?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(service::serve(app, &format!("{host}:{port}")))?;
        }
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
