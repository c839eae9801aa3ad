//! Training loop (Adam + reduce-on-plateau), evaluation over dataset
//! splits, and the multi-frame ablation driver.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use raddet_tensor::{backward, Adam};

use crate::augment::{add_noise, flip_annotations, flip_frame, flip_targets};
use crate::dataset::{Dataset, Split};
use crate::inference::{decode_frame, DecodeParams, Detection, FrameMaps};
use crate::labeling::{Annotation, TargetMaps, NUM_CLASSES};
use crate::losses::{total_loss, BatchTargets, LossBreakdown, LossWeights};
use crate::metrics::{evaluate_frames, ApInterpolation, EvalReport, GroundTruth};
use crate::model::{Model, ModelConfig, ModelVariant, NetworkOutput};
use crate::sim::RadarFrame;
use crate::{CoreError, Result, Tensor};

/// Learning-rate schedule: multiply by `factor` after `patience` consecutive
/// epochs without the monitored loss improving by more than `min_delta`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub min_lr: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, factor: f64, patience: usize, min_delta: f64, min_lr: f64) -> Self {
        PlateauScheduler {
            lr: lr0,
            factor,
            patience,
            min_delta,
            min_lr,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Feeds one epoch's monitored value; returns the learning rate to use
    /// from now on.
    pub fn observe(&mut self, value: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => value < best - self.min_delta,
        };
        if improved {
            self.best = Some(value);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub epochs: usize,
    /// Optional hard cap on optimizer steps (overfit/ablation runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub t_frames: usize,
    pub seed: u64,
    pub variant: ModelVariant,
    pub weights: LossWeights,
    pub augment: bool,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub min_lr: f64,
    pub decode: DecodeParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr0: 1e-4,
            epochs: 80,
            max_steps: None,
            t_frames: 1,
            seed: 0,
            variant: ModelVariant::CrossAttention,
            weights: LossWeights::default(),
            augment: true,
            plateau_factor: 0.1,
            plateau_patience: 4,
            plateau_min_delta: 1e-6,
            min_lr: 1e-7,
            decode: DecodeParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_total: f64,
    pub train_heatmap: f64,
    pub train_offset: f64,
    pub train_heading: f64,
    pub val_total: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_val: f64,
    pub steps: usize,
}

/// All frames of one sequence held in memory with their targets.
struct LoadedSeq {
    frames: Vec<(RadarFrame, Vec<Annotation>, TargetMaps)>,
}

fn load_split(ds: &Dataset, split: Split) -> Result<Vec<LoadedSeq>> {
    let mut out = Vec::new();
    for sid in ds.manifest.split(split) {
        let seq = ds.manifest.sequence(sid)?;
        let mut frames = Vec::with_capacity(seq.frames.len());
        for rec in &seq.frames {
            let (frame, anns) = ds.load_frame(rec)?;
            let targets = ds.load_targets(rec)?;
            frames.push((frame, anns, targets));
        }
        out.push(LoadedSeq { frames });
    }
    Ok(out)
}

/// Frame stack ending at `center`, oldest first.
fn stack_range(center: usize, t: usize) -> std::ops::RangeInclusive<usize> {
    center + 1 - t..=center
}

struct Batch {
    ra: Tensor,
    rd: Tensor,
    ad: Tensor,
    targets: BatchTargets,
    frame_ids: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn assemble_batch(
    seqs: &[LoadedSeq],
    samples: &[(usize, usize)],
    t: usize,
    augment: bool,
    rng: &mut ChaCha8Rng,
) -> Batch {
    let n = samples.len();
    let g = seqs[samples[0].0].frames[0].0.geometry;
    let (r, a, d) = (g.r_bins, g.a_bins, g.d_bins);
    let (qr, qa) = (r / 4, a / 4);

    let mut ra = Vec::with_capacity(n * t * r * a);
    let mut rd = Vec::with_capacity(n * t * r * d);
    let mut ad = Vec::with_capacity(n * t * a * d);
    let mut hm = Vec::with_capacity(n * NUM_CLASSES * r * a);
    let mut off = Vec::with_capacity(n * 2 * r * a);
    let mut offm = Vec::with_capacity(n * r * a);
    let mut hd = Vec::with_capacity(n * 2 * qr * qa);
    let mut hdm = Vec::with_capacity(n * qr * qa);
    let mut frame_ids = Vec::with_capacity(n);

    for &(si, center) in samples {
        let seq = &seqs[si];
        let mut stack: Vec<RadarFrame> = stack_range(center, t)
            .map(|i| seq.frames[i].0.clone())
            .collect();
        let mut targets = seq.frames[center].2.clone();

        if augment {
            let apply_noise = rng.gen_bool(0.5);
            let apply_flip = rng.gen_bool(0.5);
            if apply_noise {
                for f in &mut stack {
                    add_noise(f, rng);
                }
            }
            if apply_flip {
                for f in &mut stack {
                    *f = flip_frame(f);
                }
                targets = flip_targets(&targets);
                // annotations are not consumed by the loss; keep them in sync
                // anyway for debugging hooks
                let _ = flip_annotations(&seq.frames[center].1, g.a_bins);
            }
        }

        for f in &stack {
            ra.extend_from_slice(&f.ra.data);
        }
        for f in &stack {
            rd.extend_from_slice(&f.rd.data);
        }
        for f in &stack {
            ad.extend_from_slice(&f.ad.data);
        }
        for m in &targets.heatmap {
            hm.extend_from_slice(&m.data);
        }
        off.extend_from_slice(&targets.offset[0].data);
        off.extend_from_slice(&targets.offset[1].data);
        offm.extend_from_slice(&targets.offset_mask.data);
        hd.extend_from_slice(&targets.heading[0].data);
        hd.extend_from_slice(&targets.heading[1].data);
        hdm.extend_from_slice(&targets.heading_mask.data);
        frame_ids.push(format!("s{si}_f{center}"));
    }

    Batch {
        ra: Tensor::new(&[n, t, r, a], ra).expect("ra batch"),
        rd: Tensor::new(&[n, t, r, d], rd).expect("rd batch"),
        ad: Tensor::new(&[n, t, a, d], ad).expect("ad batch"),
        targets: BatchTargets {
            heatmap: Tensor::new(&[n, NUM_CLASSES, r, a], hm).expect("hm batch"),
            offset: Tensor::new(&[n, 2, r, a], off).expect("off batch"),
            offset_mask: Tensor::new(&[n, r, a], offm).expect("offm batch"),
            heading: Tensor::new(&[n, 2, qr, qa], hd).expect("hd batch"),
            heading_mask: Tensor::new(&[n, qr, qa], hdm).expect("hdm batch"),
        },
        frame_ids,
    }
}

fn valid_samples(seqs: &[LoadedSeq], t: usize) -> Vec<(usize, usize)> {
    let mut samples = Vec::new();
    for (si, seq) in seqs.iter().enumerate() {
        for center in (t - 1)..seq.frames.len() {
            samples.push((si, center));
        }
    }
    samples
}

/// Full training run. Requires a labeled dataset with non-empty train and
/// val splits; returns the best-validation model and the per-epoch log.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.weights.validate()?;
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(CoreError::Config("batch_size and epochs must be >= 1".into()));
    }
    let train_seqs = load_split(ds, Split::Train)?;
    let val_seqs = load_split(ds, Split::Val)?;
    if train_seqs.is_empty() || val_seqs.is_empty() {
        return Err(CoreError::Config(
            "dataset needs non-empty train and val splits".into(),
        ));
    }
    let samples = valid_samples(&train_seqs, cfg.t_frames);
    if samples.is_empty() {
        return Err(CoreError::Config(format!(
            "no sequence is long enough for t_frames={}",
            cfg.t_frames
        )));
    }

    let model_cfg = ModelConfig::new(ds.geometry(), cfg.t_frames, cfg.variant);
    let mut model = Model::build(model_cfg, cfg.seed)?;
    let mut opt = Adam::new(cfg.lr0);
    let mut scheduler = PlateauScheduler::new(
        cfg.lr0,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.plateau_min_delta,
        cfg.min_lr,
    );

    let mut log = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_model = model.clone();
    let mut steps = 0usize;
    let mut stop = false;

    for epoch in 0..cfg.epochs {
        let mut order = samples.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9));
        order.shuffle(&mut rng);

        let mut sums = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = assemble_batch(&train_seqs, chunk, cfg.t_frames, cfg.augment, &mut rng);
            let out = model.forward(&batch.ra, &batch.rd, &batch.ad, true)?;
            let (loss, breakdown) = total_loss(&out, &batch.targets, &cfg.weights)?;
            if !breakdown.total.is_finite() {
                return Err(CoreError::NanLoss {
                    batch_id: format!(
                        "epoch {epoch}, step {steps}, frames [{}]",
                        batch.frame_ids.join(", ")
                    ),
                });
            }
            model.clear_grads();
            backward(&loss)?;
            opt.lr = scheduler.lr;
            opt.step(model.params_mut())?;
            steps += 1;
            sums.total += breakdown.total;
            sums.heatmap += breakdown.heatmap;
            sums.offset += breakdown.offset;
            sums.heading += breakdown.heading;
            batches += 1;
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                stop = true;
                break;
            }
        }

        let val_total = validation_loss(&mut model, &val_seqs, cfg)?;
        let lr_used = scheduler.lr;
        scheduler.observe(val_total);
        if val_total < best_val {
            best_val = val_total;
            best_model = model.clone();
        }
        log.push(EpochLog {
            epoch,
            lr: lr_used,
            train_total: sums.total / batches.max(1) as f64,
            train_heatmap: sums.heatmap / batches.max(1) as f64,
            train_offset: sums.offset / batches.max(1) as f64,
            train_heading: sums.heading / batches.max(1) as f64,
            val_total,
        });
        log::info!(
            "epoch {epoch}: lr {lr_used:.2e} train {:.5} val {val_total:.5}",
            sums.total / batches.max(1) as f64
        );
        if stop {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best_model,
        log,
        best_val,
        steps,
    })
}

fn validation_loss(model: &mut Model, seqs: &[LoadedSeq], cfg: &TrainConfig) -> Result<f64> {
    let samples = valid_samples(seqs, cfg.t_frames);
    if samples.is_empty() {
        return Err(CoreError::Config("validation split has no usable frames".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused (no augmentation)
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in samples.chunks(cfg.batch_size) {
        let batch = assemble_batch(seqs, chunk, cfg.t_frames, false, &mut rng);
        let out = model.forward(&batch.ra, &batch.rd, &batch.ad, false)?;
        let (_, breakdown) = total_loss(&out, &batch.targets, &cfg.weights)?;
        total += breakdown.total;
        batches += 1;
    }
    Ok(total / batches as f64)
}

fn ground_truth_of(anns: &[Annotation], frame: &RadarFrame) -> Vec<GroundTruth> {
    anns.iter()
        .map(|a| GroundTruth {
            class_id: a.class_id,
            pos_cart: frame
                .geometry
                .bins_to_cartesian(a.center_bin_r, a.center_bin_a),
            heading_rad: a.heading_rad,
        })
        .collect()
}

/// Runs the full decode over a split and scores it at each threshold.
pub fn evaluate_model(
    model: &mut Model,
    ds: &Dataset,
    split: Split,
    decode: &DecodeParams,
    interp: ApInterpolation,
    thresholds: &[f64],
) -> Result<Vec<EvalReport>> {
    let t = model.config.t_frames;
    if ds.geometry().r_bins != model.config.r_bins
        || ds.geometry().a_bins != model.config.a_bins
        || ds.geometry().d_bins != model.config.d_bins
    {
        return Err(CoreError::Eval(format!(
            "checkpoint geometry {}x{}x{} does not match dataset {}x{}x{}",
            model.config.r_bins,
            model.config.a_bins,
            model.config.d_bins,
            ds.geometry().r_bins,
            ds.geometry().a_bins,
            ds.geometry().d_bins
        )));
    }
    let seqs = load_split(ds, split)?;
    let samples = valid_samples(&seqs, t);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut frames = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(8) {
        let batch = assemble_batch(&seqs, chunk, t, false, &mut rng);
        let out: NetworkOutput = model.forward(&batch.ra, &batch.rd, &batch.ad, false)?;
        for (bi, &(si, center)) in chunk.iter().enumerate() {
            let maps = FrameMaps::from_output(&out, bi);
            let dets: Vec<Detection> = decode_frame(&maps, ds.geometry(), decode);
            let gts = ground_truth_of(&seqs[si].frames[center].1, &seqs[si].frames[center].0);
            frames.push((dets, gts));
        }
    }
    thresholds
        .iter()
        .map(|&thr| evaluate_frames(&frames, thr, interp))
        .collect()
}

/// Scores the ground-truth targets piped through the decoder as if they were
/// network output (the oracle ceiling).
pub fn evaluate_oracle(
    ds: &Dataset,
    split: Split,
    decode: &DecodeParams,
    interp: ApInterpolation,
    thresholds: &[f64],
) -> Result<Vec<EvalReport>> {
    let seqs = load_split(ds, split)?;
    let mut frames = Vec::new();
    for seq in &seqs {
        for (frame, anns, targets) in &seq.frames {
            let maps = FrameMaps::from_targets(targets);
            let dets = decode_frame(&maps, &frame.geometry, decode);
            frames.push((dets, ground_truth_of(anns, frame)));
        }
    }
    thresholds
        .iter()
        .map(|&thr| evaluate_frames(&frames, thr, interp))
        .collect()
}

/// Heading-accuracy comparison over stacked-frame depths: trains one model
/// per `t` and reports the three accuracy bands at the 2 m association
/// threshold.
pub fn ablate_frames(
    ds: &Dataset,
    t_list: &[usize],
    base: &TrainConfig,
) -> Result<Vec<(usize, [f64; 3])>> {
    let min_len = ds
        .manifest
        .sequences
        .iter()
        .map(|s| s.frames.len())
        .min()
        .unwrap_or(0);
    if let Some(&t_max) = t_list.iter().max() {
        if min_len < t_max {
            return Err(CoreError::Config(format!(
                "sequences of length {min_len} cannot support t_frames={t_max}"
            )));
        }
    }
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let cfg = TrainConfig {
            t_frames: t,
            ..base.clone()
        };
        let outcome = train(ds, &cfg)?;
        let mut model = outcome.model;
        let reports = evaluate_model(
            &mut model,
            ds,
            Split::Test,
            &cfg.decode,
            ApInterpolation::AllPoint,
            &[2.0],
        )?;
        rows.push((t, reports[0].heading_accuracy));
    }
    Ok(rows)
}

/// Input tensors (batch of one) for a single manifest frame, stacking the
/// preceding `t - 1` frames of its sequence as channels. Returns `None`
/// when the frame does not have enough history.
pub fn stack_for_record(
    ds: &Dataset,
    seq: &crate::dataset::SequenceRecord,
    rec: &crate::dataset::FrameRecord,
    t: usize,
) -> Result<Option<(Tensor, Tensor, Tensor)>> {
    if rec.index + 1 < t {
        return Ok(None);
    }
    let g = *ds.geometry();
    let mut ra = Vec::with_capacity(t * g.r_bins * g.a_bins);
    let mut rd = Vec::with_capacity(t * g.r_bins * g.d_bins);
    let mut ad = Vec::with_capacity(t * g.a_bins * g.d_bins);
    for i in stack_range(rec.index, t) {
        let (frame, _) = ds.load_frame(&seq.frames[i])?;
        ra.extend_from_slice(&frame.ra.data);
        rd.extend_from_slice(&frame.rd.data);
        ad.extend_from_slice(&frame.ad.data);
    }
    Ok(Some((
        Tensor::new(&[1, t, g.r_bins, g.a_bins], ra)?,
        Tensor::new(&[1, t, g.r_bins, g.d_bins], rd)?,
        Tensor::new(&[1, t, g.a_bins, g.d_bins], ad)?,
    )))
}

/// Training log as CSV.
pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,lr,train_total,train_heatmap,train_offset,train_heading,val_total\n");
    for row in log {
        out.push_str(&format!(
            "{},{:.8e},{:.8},{:.8},{:.8},{:.8},{:.8}\n",
            row.epoch,
            row.lr,
            row.train_total,
            row.train_heatmap,
            row.train_offset,
            row.train_heading,
            row.val_total
        ));
    }
    std::fs::write(path, out).map_err(|e| CoreError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_two_plateaus_walk_down_twice() {
        let mut s = PlateauScheduler::new(1e-4, 0.1, 4, 1e-6, 1e-7);
        assert_eq!(s.observe(1.0), 1e-4);
        // 4 epochs without improvement -> 1e-5
        for _ in 0..3 {
            assert_eq!(s.observe(1.0), 1e-4);
        }
        assert!((s.observe(1.0) - 1e-5).abs() < 1e-18);
        // 4 more -> 1e-6
        for _ in 0..3 {
            assert!((s.observe(1.0) - 1e-5).abs() < 1e-18);
        }
        assert!((s.observe(1.0) - 1e-6).abs() < 1e-19);
    }

    #[test]
    fn scheduler_improvement_resets_patience() {
        let mut s = PlateauScheduler::new(1e-4, 0.1, 4, 1e-6, 1e-7);
        s.observe(1.0);
        s.observe(1.0);
        s.observe(1.0);
        s.observe(0.5); // improvement, counter resets
        for _ in 0..3 {
            assert_eq!(s.observe(0.5), 1e-4);
        }
        assert!((s.observe(0.5) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn scheduler_respects_min_lr() {
        let mut s = PlateauScheduler::new(1e-6, 0.1, 1, 1e-6, 1e-7);
        s.observe(1.0);
        assert!((s.observe(1.0) - 1e-7).abs() < 1e-20);
        assert_eq!(s.observe(1.0), 1e-7); // clamped
    }

    #[test]
    fn scheduler_tiny_improvement_counts_as_plateau() {
        let mut s = PlateauScheduler::new(1e-4, 0.1, 2, 1e-6, 1e-7);
        s.observe(1.0);
        s.observe(1.0 - 1e-9); // below min_delta: still a bad epoch
        assert!((s.observe(1.0 - 2e-9) - 1e-5).abs() < 1e-18);
    }
}
