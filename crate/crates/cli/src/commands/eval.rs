use std::path::PathBuf;

use clap::{Args, ValueEnum};

use raddet_core::dataset::{Dataset, Split};
use raddet_core::inference::DecodeParams;
use raddet_core::metrics::ApInterpolation;
use raddet_core::model::Model;
use raddet_core::training::{evaluate_model, evaluate_oracle};
use raddet_core::CoreError;

use super::CliResult;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InterpArg {
    AllPoint,
    ElevenPoint,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to evaluate (omit with --oracle).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Score the ground-truth target maps piped through the decoder instead
    /// of a model (the label/decode ceiling).
    #[arg(long, default_value_t = false)]
    pub oracle: bool,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Association thresholds in meters.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 1.0])]
    pub thresholds: Vec<f64>,
    #[arg(long, value_enum, default_value_t = InterpArg::AllPoint)]
    pub interp: InterpArg,
    /// Report JSON path.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Report CSV path (one row per threshold).
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub score_thresh: f64,
    #[arg(long, default_value_t = 5)]
    pub peak_kernel: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dnms_radius: f64,
}

pub fn run(args: EvalArgs) -> CliResult {
    if args.oracle == args.checkpoint.is_some() {
        return Err(super::usage(
            "exactly one of --checkpoint and --oracle must be given",
        ));
    }
    let ds = Dataset::open(&args.data)?;
    let decode = DecodeParams {
        peak_kernel: args.peak_kernel,
        score_thresh: args.score_thresh,
        dnms_radius_m: args.dnms_radius,
    };
    let interp = match args.interp {
        InterpArg::AllPoint => ApInterpolation::AllPoint,
        InterpArg::ElevenPoint => ApInterpolation::ElevenPoint,
    };

    let reports = if args.oracle {
        evaluate_oracle(&ds, args.split, &decode, interp, &args.thresholds)?
    } else {
        let mut model = Model::load(args.checkpoint.as_ref().unwrap())?;
        evaluate_model(&mut model, &ds, args.split, &decode, interp, &args.thresholds)?
    };

    for r in &reports {
        println!(
            "@{:.2} m: mAP {:.4}, RMSE {}, misclass {:.4}, heading acc {:.2}/{:.2}/{:.2} ({} samples)",
            r.threshold_m,
            r.mean_ap,
            r.rmse_m.map(|v| format!("{v:.3} m")).unwrap_or_else(|| "n/a".into()),
            r.misclassification_rate,
            r.heading_accuracy[0],
            r.heading_accuracy[1],
            r.heading_accuracy[2],
            r.heading_samples,
        );
    }

    if let Some(path) = &args.out_json {
        let json = serde_json::to_string_pretty(&reports)
            .map_err(|e| CoreError::Config(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| CoreError::io(path, e))?;
    }
    if let Some(path) = &args.out_csv {
        let mut csv = String::from(raddet_core::metrics::EvalReport::csv_header());
        csv.push('\n');
        for r in &reports {
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        std::fs::write(path, csv).map_err(|e| CoreError::io(path, e))?;
    }
    Ok(())
}
