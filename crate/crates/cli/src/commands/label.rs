use std::path::PathBuf;

use clap::{Args, ValueEnum};

use raddet_core::dataset::label_dataset;
use raddet_core::labeling::{LabelConfig, LabelMode};

use super::CliResult;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelModeArg {
    /// Mean/covariance measured from the spectrum per object.
    Bivariate,
    /// Fixed-width isotropic Gaussian baseline.
    Gaussian,
}

#[derive(Args)]
pub struct LabelArgs {
    /// Dataset directory (from `simulate`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "label-mode", value_enum, default_value_t = LabelModeArg::Bivariate)]
    pub label_mode: LabelModeArg,
    /// Mask cut on the peak-normalized crop before taking moments.
    #[arg(long, default_value_t = 0.5)]
    pub mask_threshold: f64,
}

pub fn run(args: LabelArgs) -> CliResult {
    if !(0.0..1.0).contains(&args.mask_threshold) {
        return Err(super::usage(format!(
            "--mask-threshold must be in [0, 1), got {}",
            args.mask_threshold
        )));
    }
    let cfg = LabelConfig {
        mode: match args.label_mode {
            LabelModeArg::Bivariate => LabelMode::Bivariate,
            LabelModeArg::Gaussian => LabelMode::Gaussian,
        },
        mask_threshold: args.mask_threshold,
    };
    let n = label_dataset(&args.data, &cfg)?;
    println!("labeled {n} frames in {} ({:?} mode)", args.data.display(), cfg.mode);
    Ok(())
}
