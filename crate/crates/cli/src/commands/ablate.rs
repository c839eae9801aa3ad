use std::path::PathBuf;

use clap::Args;

use raddet_core::dataset::Dataset;
use raddet_core::training::{ablate_frames, TrainConfig};
use raddet_core::CoreError;

use super::CliResult;

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Stacked-frame depths to compare.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 3, 5])]
    pub t_list: Vec<usize>,
    /// Output CSV (one row per depth).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 80)]
    pub epochs: usize,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: AblateArgs) -> CliResult {
    let ds = Dataset::open(&args.data)?;
    let base = TrainConfig {
        batch_size: args.batch_size,
        lr0: args.lr,
        epochs: args.epochs,
        max_steps: args.max_steps,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let rows = ablate_frames(&ds, &args.t_list, &base)?;

    let mut csv = String::from("t_frames,heading_acc_45,heading_acc_22_5,heading_acc_11_25\n");
    for (t, acc) in &rows {
        println!(
            "t={t}: heading accuracy {:.3} / {:.3} / {:.3}",
            acc[0], acc[1], acc[2]
        );
        csv.push_str(&format!("{t},{:.6},{:.6},{:.6}\n", acc[0], acc[1], acc[2]));
    }
    std::fs::write(&args.out, csv).map_err(|e| CoreError::io(&args.out, e))?;
    println!("ablation table written to {}", args.out.display());
    Ok(())
}
