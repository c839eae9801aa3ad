use std::path::PathBuf;

use clap::{Args, ValueEnum};

use raddet_core::dataset::Dataset;
use raddet_core::inference::DecodeParams;
use raddet_core::losses::{LossWeights, OffsetLossKind};
use raddet_core::model::ModelVariant;
use raddet_core::training::{train, write_log_csv, TrainConfig};

use super::CliResult;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    CrossAttention,
    RaOnly,
    ThreeDecoder,
}

impl From<VariantArg> for ModelVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::CrossAttention => ModelVariant::CrossAttention,
            VariantArg::RaOnly => ModelVariant::RaOnly,
            VariantArg::ThreeDecoder => ModelVariant::ThreeDecoder,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OffsetLossArg {
    FocalBce,
    MaskedL1,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Labeled dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint, log, and config echo.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::CrossAttention)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 1)]
    pub t_frames: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 80)]
    pub epochs: usize,
    /// Stop after this many optimizer steps (short/overfit runs).
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable noise/flip augmentation on the train split.
    #[arg(long, default_value_t = false)]
    pub no_augment: bool,
    #[arg(long, default_value_t = 1.0)]
    pub w1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w3: f64,
    #[arg(long, value_enum, default_value_t = OffsetLossArg::FocalBce)]
    pub offset_loss: OffsetLossArg,
}

pub fn run(args: TrainArgs) -> CliResult {
    let ds = Dataset::open(&args.data)?;
    let cfg = TrainConfig {
        batch_size: args.batch_size,
        lr0: args.lr,
        epochs: args.epochs,
        max_steps: args.max_steps,
        t_frames: args.t_frames,
        seed: args.seed,
        variant: args.variant.into(),
        weights: LossWeights {
            w1: args.w1,
            w2: args.w2,
            w3: args.w3,
            offset_kind: match args.offset_loss {
                OffsetLossArg::FocalBce => OffsetLossKind::FocalBce,
                OffsetLossArg::MaskedL1 => OffsetLossKind::MaskedL1,
            },
            ..LossWeights::default()
        },
        augment: !args.no_augment,
        decode: DecodeParams::default(),
        ..TrainConfig::default()
    };

    std::fs::create_dir_all(&args.out).map_err(|e| raddet_core::CoreError::io(&args.out, e))?;
    let config_json = serde_json::to_string_pretty(&cfg)
        .map_err(|e| raddet_core::CoreError::Config(e.to_string()))?;
    std::fs::write(args.out.join("train_config.json"), config_json)
        .map_err(|e| raddet_core::CoreError::io(&args.out, e))?;

    let outcome = train(&ds, &cfg)?;
    println!(
        "trained {:?} for {} steps: {} parameters, best val loss {:.6}",
        cfg.variant,
        outcome.steps,
        outcome.model.param_count(),
        outcome.best_val
    );
    outcome.model.save(&args.out.join("model.ckpt"))?;
    write_log_csv(&args.out.join("train_log.csv"), &outcome.log)?;
    println!("checkpoint and log written to {}", args.out.display());
    Ok(())
}
