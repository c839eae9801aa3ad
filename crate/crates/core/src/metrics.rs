//! Detection evaluation: distance-threshold matching, per-class average
//! precision, localization RMSE, misclassification rate, and heading
//! accuracy bands.

use serde::{Deserialize, Serialize};

use crate::geometry::angular_error;
use crate::inference::Detection;
use crate::labeling::NUM_CLASSES;
use crate::Result;

/// Heading accuracy bands, degrees.
pub const HEADING_BANDS_DEG: [f64; 3] = [45.0, 22.5, 11.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class_id: u8,
    pub pos_cart: (f64, f64),
    pub heading_rad: f64,
}

/// AP interpolation style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    AllPoint,
    ElevenPoint,
}

/// One detection's fate after matching, for the global AP sweep.
#[derive(Debug, Clone, Copy)]
pub struct MatchRecord {
    pub class_id: u8,
    pub confidence: f64,
    pub tp: bool,
    /// Cartesian distance to the matched ground truth.
    pub distance_m: f64,
    /// Wrapped |heading error| when both sides carry headings.
    pub heading_err: Option<f64>,
    /// The nearest in-threshold ground truth has a different class.
    pub cross_class: bool,
}

/// Result of matching one frame at one distance threshold.
#[derive(Debug, Clone, Default)]
pub struct FrameMatch {
    pub records: Vec<MatchRecord>,
    /// Ground truths per class in this frame.
    pub gt_counts: [usize; NUM_CLASSES],
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Greedy confidence-ordered matching: every detection takes the nearest
/// still-unmatched ground truth of its own class within `threshold_m`;
/// leftovers are false positives / false negatives. Each detection also
/// notes whether its overall-nearest in-threshold ground truth belongs to a
/// different class (the misclassification tally).
pub fn match_frame(
    detections: &[Detection],
    ground_truth: &[GroundTruth],
    threshold_m: f64,
) -> FrameMatch {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| {
        detections[j]
            .confidence
            .partial_cmp(&detections[i].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| detections[i].class_id.cmp(&detections[j].class_id))
            .then_with(|| {
                detections[i]
                    .pos_bins
                    .partial_cmp(&detections[j].pos_bins)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });

    let mut gt_taken = vec![false; ground_truth.len()];
    let mut records = Vec::with_capacity(detections.len());
    for &di in &order {
        let det = &detections[di];
        // Nearest same-class unmatched ground truth inside the threshold.
        let mut best: Option<(usize, f64)> = None;
        // Nearest ground truth of any class (for the misclassification tally).
        let mut nearest_any: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truth.iter().enumerate() {
            let d = dist(det.pos_cart, gt.pos_cart);
            if d > threshold_m {
                continue;
            }
            if nearest_any.map_or(true, |(_, bd)| d < bd) {
                nearest_any = Some((gi, d));
            }
            if gt.class_id == det.class_id
                && !gt_taken[gi]
                && best.map_or(true, |(_, bd)| d < bd)
            {
                best = Some((gi, d));
            }
        }
        let cross_class =
            nearest_any.is_some_and(|(gi, _)| ground_truth[gi].class_id != det.class_id);
        match best {
            Some((gi, d)) => {
                gt_taken[gi] = true;
                let heading_err = det
                    .heading_rad
                    .map(|h| angular_error(h, ground_truth[gi].heading_rad));
                records.push(MatchRecord {
                    class_id: det.class_id,
                    confidence: det.confidence,
                    tp: true,
                    distance_m: d,
                    heading_err,
                    cross_class,
                });
            }
            None => records.push(MatchRecord {
                class_id: det.class_id,
                confidence: det.confidence,
                tp: false,
                distance_m: f64::INFINITY,
                heading_err: None,
                cross_class,
            }),
        }
    }

    let mut gt_counts = [0usize; NUM_CLASSES];
    for gt in ground_truth {
        gt_counts[gt.class_id as usize] += 1;
    }
    FrameMatch {
        records,
        gt_counts,
    }
}

/// Interpolated average precision from a ranked tp/fp sweep.
/// Returns `None` when the class has no ground truth.
pub fn average_precision(
    records: &[MatchRecord],
    class_id: u8,
    n_gt: usize,
    interp: ApInterpolation,
) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut recs: Vec<&MatchRecord> = records.iter().filter(|r| r.class_id == class_id).collect();
    recs.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut precision = Vec::with_capacity(recs.len());
    let mut recall = Vec::with_capacity(recs.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for r in &recs {
        if r.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    if precision.is_empty() {
        return Some(0.0);
    }
    // Precision envelope: monotone non-increasing from the right.
    let mut envelope = precision.clone();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match interp {
        ApInterpolation::AllPoint => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for i in 0..envelope.len() {
                ap += (recall[i] - prev_recall) * envelope[i];
                prev_recall = recall[i];
            }
            Some(ap)
        }
        ApInterpolation::ElevenPoint => {
            let mut total = 0.0;
            for k in 0..=10 {
                let r = k as f64 / 10.0;
                let p = recall
                    .iter()
                    .zip(&envelope)
                    .find(|(rec, _)| **rec >= r - 1e-12)
                    .map(|(_, p)| *p)
                    .unwrap_or(0.0);
                total += p;
            }
            Some(total / 11.0)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt: usize,
}

/// Evaluation summary at one association threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold_m: f64,
    pub interpolation: ApInterpolation,
    /// Per class; `None` when the class has no ground truth in the split.
    pub ap_per_class: Vec<Option<f64>>,
    /// Mean over classes that have ground truth.
    pub mean_ap: f64,
    /// Root-mean-square Cartesian distance over true positives; `None`
    /// without any true positive.
    pub rmse_m: Option<f64>,
    pub misclassification_rate: f64,
    /// Fractions of true positives within the 45 / 22.5 / 11.25 degree bands.
    pub heading_accuracy: [f64; 3],
    /// True positives carrying a heading estimate.
    pub heading_samples: usize,
    pub counts: Vec<ClassCounts>,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "threshold_m,mean_ap,ap_pedestrian,ap_cyclist,ap_car,rmse_m,misclassification_rate,heading_acc_45,heading_acc_22_5,heading_acc_11_25"
    }

    pub fn csv_row(&self) -> String {
        let ap = |i: usize| {
            self.ap_per_class[i]
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "n/a".into())
        };
        format!(
            "{:.4},{:.6},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.threshold_m,
            self.mean_ap,
            ap(0),
            ap(1),
            ap(2),
            self.rmse_m
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "n/a".into()),
            self.misclassification_rate,
            self.heading_accuracy[0],
            self.heading_accuracy[1],
            self.heading_accuracy[2],
        )
    }
}

/// Aggregates per-frame detection/ground-truth pairs into one report.
pub fn evaluate_frames(
    frames: &[(Vec<Detection>, Vec<GroundTruth>)],
    threshold_m: f64,
    interp: ApInterpolation,
) -> Result<EvalReport> {
    let mut records = Vec::new();
    let mut gt_totals = [0usize; NUM_CLASSES];
    for (dets, gts) in frames {
        let fm = match_frame(dets, gts, threshold_m);
        records.extend(fm.records);
        for c in 0..NUM_CLASSES {
            gt_totals[c] += fm.gt_counts[c];
        }
    }

    let ap_per_class: Vec<Option<f64>> = (0..NUM_CLASSES)
        .map(|c| average_precision(&records, c as u8, gt_totals[c], interp))
        .collect();
    let present: Vec<f64> = ap_per_class.iter().flatten().copied().collect();
    for (c, ap) in ap_per_class.iter().enumerate() {
        if ap.is_none() {
            log::warn!("class {c} has no ground truth; skipped in mean AP");
        }
    }
    let mean_ap = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };

    let mut counts = vec![ClassCounts::default(); NUM_CLASSES];
    for (c, count) in counts.iter_mut().enumerate() {
        count.gt = gt_totals[c];
        count.tp = records.iter().filter(|r| r.class_id as usize == c && r.tp).count();
        count.fp = records.iter().filter(|r| r.class_id as usize == c && !r.tp).count();
        count.fn_ = count.gt - count.tp;
    }

    let tps: Vec<&MatchRecord> = records.iter().filter(|r| r.tp).collect();
    let rmse_m = if tps.is_empty() {
        log::warn!("no true positives at {threshold_m} m; RMSE unavailable");
        None
    } else {
        Some(
            (tps.iter().map(|r| r.distance_m * r.distance_m).sum::<f64>() / tps.len() as f64)
                .sqrt(),
        )
    };

    let cross = records.iter().filter(|r| r.cross_class).count();
    let misclassification_rate = if cross + tps.len() == 0 {
        0.0
    } else {
        cross as f64 / (cross + tps.len()) as f64
    };

    let with_heading: Vec<f64> = tps.iter().filter_map(|r| r.heading_err).collect();
    let mut heading_accuracy = [0.0; 3];
    if !with_heading.is_empty() {
        for (i, band) in HEADING_BANDS_DEG.iter().enumerate() {
            let band_rad = band.to_radians();
            let inside = with_heading.iter().filter(|&&e| e <= band_rad).count();
            heading_accuracy[i] = inside as f64 / with_heading.len() as f64;
        }
    }

    Ok(EvalReport {
        threshold_m,
        interpolation: interp,
        ap_per_class,
        mean_ap,
        rmse_m,
        misclassification_rate,
        heading_accuracy,
        heading_samples: with_heading.len(),
        counts,
    })
}
