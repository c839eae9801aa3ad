use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;

use raddet_core::dataset::{Dataset, Split};
use raddet_core::inference::{decode_frame, DecodeParams, FrameMaps};
use raddet_core::model::Model;
use raddet_core::training::stack_for_record;
use raddet_core::CoreError;

use super::CliResult;

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Output JSON-lines file (one detection per line).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub score_thresh: f64,
    #[arg(long, default_value_t = 5)]
    pub peak_kernel: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dnms_radius: f64,
}

pub fn run(args: InferArgs) -> CliResult {
    if args.peak_kernel % 2 == 0 {
        return Err(super::usage("--peak-kernel must be odd"));
    }
    let ds = Dataset::open(&args.data)?;
    let mut model = Model::load(&args.checkpoint)?;
    let params = DecodeParams {
        peak_kernel: args.peak_kernel,
        score_thresh: args.score_thresh,
        dnms_radius_m: args.dnms_radius,
    };

    let mut out = std::fs::File::create(&args.out).map_err(|e| CoreError::io(&args.out, e))?;
    let mut total = 0usize;
    for (seq, rec) in ds.split_frames(args.split) {
        let Some((ra, rd, ad)) = stack_for_record(&ds, seq, rec, model.config.t_frames)? else {
            continue; // not enough history for the frame stack
        };
        let output = model.forward(&ra, &rd, &ad, false)?;
        let maps = FrameMaps::from_output(&output, 0);
        for det in decode_frame(&maps, ds.geometry(), &params) {
            let mut obj = serde_json::to_value(&det)
                .map_err(|e| CoreError::Config(e.to_string()))?;
            obj.as_object_mut()
                .expect("detection serializes to an object")
                .insert("frame_id".into(), serde_json::Value::String(rec.id.clone()));
            writeln!(out, "{obj}").map_err(|e| CoreError::io(&args.out, e))?;
            total += 1;
        }
    }
    println!("wrote {total} detections to {}", args.out.display());
    Ok(())
}
