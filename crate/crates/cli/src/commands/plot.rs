use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use raddet_core::dataset::Dataset;
use raddet_core::{CoreError, Map2d};

use super::CliResult;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ViewArg {
    Ra,
    Rd,
    Ad,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Heatmap0,
    Heatmap1,
    Heatmap2,
    OffsetR,
    OffsetA,
    OffsetMask,
    HeadingSin,
    HeadingCos,
    HeadingMask,
}

#[derive(Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Frame id (see manifest), e.g. s003_f2. Required for map plots.
    #[arg(long)]
    pub frame: Option<String>,
    /// Raw view to render.
    #[arg(long, value_enum)]
    pub view: Option<ViewArg>,
    /// Cached target map to render (requires a labeled dataset).
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    /// Output PGM path for --view/--target.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON-lines detections (from `infer`) to convert into heading arrows.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Output CSV path for --detections.
    #[arg(long)]
    pub arrows: Option<PathBuf>,
}

fn write_pgm(path: &Path, map: &Map2d) -> Result<(), CoreError> {
    let peak = map.data.iter().cloned().fold(0.0f64, f64::max);
    let mut bytes = format!("P5\n{} {}\n255\n", map.cols, map.rows).into_bytes();
    for v in &map.data {
        let n = if peak > 0.0 {
            (v.max(0.0) / peak * 255.0).round() as u8
        } else {
            0
        };
        bytes.push(n);
    }
    std::fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}

fn find_frame<'a>(
    ds: &'a Dataset,
    id: &str,
) -> Result<(&'a raddet_core::dataset::SequenceRecord, &'a raddet_core::dataset::FrameRecord), CoreError>
{
    for seq in &ds.manifest.sequences {
        for rec in &seq.frames {
            if rec.id == id {
                return Ok((seq, rec));
            }
        }
    }
    Err(CoreError::Dataset(format!("frame '{id}' not in manifest")))
}

pub fn run(args: PlotArgs) -> CliResult {
    let ds = Dataset::open(&args.data)?;

    if let Some(det_path) = &args.detections {
        let out = args
            .arrows
            .as_ref()
            .ok_or_else(|| super::usage("--detections needs --arrows OUT.csv"))?;
        let text = std::fs::read_to_string(det_path).map_err(|e| CoreError::io(det_path, e))?;
        let mut csv = String::from("frame_id,class_id,x_m,y_m,dx,dy,confidence,heading_rad\n");
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| CoreError::Json {
                path: format!("{}:{}", det_path.display(), lineno + 1),
                source: e,
            })?;
            let heading = v["heading_rad"].as_f64();
            let (dx, dy) = heading.map_or((0.0, 0.0), |h| (h.sin(), h.cos()));
            csv.push_str(&format!(
                "{},{},{:.4},{:.4},{:.6},{:.6},{:.6},{}\n",
                v["frame_id"].as_str().unwrap_or(""),
                v["class_id"],
                v["pos_cart"][0].as_f64().unwrap_or(f64::NAN),
                v["pos_cart"][1].as_f64().unwrap_or(f64::NAN),
                dx,
                dy,
                v["confidence"].as_f64().unwrap_or(f64::NAN),
                heading.map(|h| format!("{h:.6}")).unwrap_or_else(|| "n/a".into()),
            ));
        }
        std::fs::write(out, csv).map_err(|e| CoreError::io(out, e))?;
        println!("arrow table written to {}", out.display());
        return Ok(());
    }

    let frame_id = args
        .frame
        .as_ref()
        .ok_or_else(|| super::usage("map plots need --frame ID"))?;
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| super::usage("map plots need --out FILE.pgm"))?;
    let (_seq, rec) = find_frame(&ds, frame_id)?;

    let map = match (args.view, args.target) {
        (Some(view), None) => {
            let (frame, _) = ds.load_frame(rec)?;
            match view {
                ViewArg::Ra => frame.ra,
                ViewArg::Rd => frame.rd,
                ViewArg::Ad => frame.ad,
            }
        }
        (None, Some(target)) => {
            let t = ds.load_targets(rec)?;
            match target {
                TargetArg::Heatmap0 => t.heatmap[0].clone(),
                TargetArg::Heatmap1 => t.heatmap[1].clone(),
                TargetArg::Heatmap2 => t.heatmap[2].clone(),
                TargetArg::OffsetR => abs_map(&t.offset[0]),
                TargetArg::OffsetA => abs_map(&t.offset[1]),
                TargetArg::OffsetMask => t.offset_mask.clone(),
                TargetArg::HeadingSin => abs_map(&t.heading[0]),
                TargetArg::HeadingCos => abs_map(&t.heading[1]),
                TargetArg::HeadingMask => t.heading_mask.clone(),
            }
        }
        _ => {
            return Err(super::usage(
                "give exactly one of --view or --target (or --detections)",
            ))
        }
    };
    write_pgm(out, &map)?;
    println!("wrote {}x{} PGM to {}", map.cols, map.rows, out.display());
    Ok(())
}

/// Signed channels are rendered by magnitude.
fn abs_map(m: &Map2d) -> Map2d {
    let mut out = m.clone();
    for v in &mut out.data {
        *v = v.abs();
    }
    out
}
