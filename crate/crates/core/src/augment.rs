//! Training-time augmentation: additive Gaussian noise and horizontal
//! (angle-axis) flips.
//!
//! Flips are exact: map axes reverse, the angle-offset and heading-sine
//! channels negate (zeros stay `+0.0`), annotation centers mirror on the
//! quantized bin grid, and headings negate. Flipping twice is the identity
//! and flipped labels equal labels of the flipped frame, bit for bit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::labeling::{Annotation, TargetMaps};
use crate::sim::RadarFrame;
use crate::Map2d;

/// Noise scale relative to each map's standard deviation.
pub const NOISE_REL_SIGMA: f64 = 0.02;

#[inline]
fn neg(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        -v
    }
}

fn flip_cols_neg(m: &Map2d) -> Map2d {
    let mut out = m.flip_cols();
    for v in &mut out.data {
        *v = neg(*v);
    }
    out
}

/// Mirrors the angle axis of the two angle-bearing views.
pub fn flip_frame(frame: &RadarFrame) -> RadarFrame {
    RadarFrame {
        ra: frame.ra.flip_cols(),
        rd: frame.rd.clone(),
        // angle is the row axis of the angle-Doppler view
        ad: frame.ad.flip_rows(),
        geometry: frame.geometry,
        frame_index: frame.frame_index,
    }
}

pub fn flip_targets(t: &TargetMaps) -> TargetMaps {
    TargetMaps {
        heatmap: t.heatmap.iter().map(Map2d::flip_cols).collect(),
        offset: [t.offset[0].flip_cols(), flip_cols_neg(&t.offset[1])],
        offset_mask: t.offset_mask.flip_cols(),
        heading: [flip_cols_neg(&t.heading[0]), t.heading[1].flip_cols()],
        heading_mask: t.heading_mask.flip_cols(),
    }
}

pub fn flip_annotations(anns: &[Annotation], a_bins: usize) -> Vec<Annotation> {
    let k = (a_bins - 1) as f64;
    anns.iter()
        .map(|a| Annotation {
            class_id: a.class_id,
            center_bin_r: a.center_bin_r,
            center_bin_a: k - a.center_bin_a,
            box_ra: [
                a.box_ra[0],
                a_bins - 1 - a.box_ra[3],
                a.box_ra[2],
                a_bins - 1 - a.box_ra[1],
            ],
            box_rd: a.box_rd,
            heading_rad: neg(a.heading_rad),
        })
        .collect()
}

/// Adds zero-mean Gaussian noise scaled to each map's spread, clamped at 0
/// (magnitude maps are non-negative).
pub fn add_noise(frame: &mut RadarFrame, rng: &mut ChaCha8Rng) {
    for map in [&mut frame.ra, &mut frame.rd, &mut frame.ad] {
        let n = map.data.len() as f64;
        let mean = map.data.iter().sum::<f64>() / n;
        let var = map.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sigma = NOISE_REL_SIGMA * var.sqrt();
        if sigma <= 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        for v in &mut map.data {
            *v = (*v + normal.sample(rng)).max(0.0);
        }
    }
}

/// Randomized training augmentation: with probability 1/2 additive noise,
/// with probability 1/2 a horizontal flip (decisions drawn in that order).
pub fn augment(
    frame: &RadarFrame,
    targets: &TargetMaps,
    annotations: &[Annotation],
    rng: &mut ChaCha8Rng,
) -> (RadarFrame, TargetMaps, Vec<Annotation>) {
    let mut frame = frame.clone();
    let apply_noise = rng.gen_bool(0.5);
    let apply_flip = rng.gen_bool(0.5);
    if apply_noise {
        add_noise(&mut frame, rng);
    }
    if apply_flip {
        (
            flip_frame(&frame),
            flip_targets(targets),
            flip_annotations(annotations, frame.geometry.a_bins),
        )
    } else {
        (frame, targets.clone(), annotations.to_vec())
    }
}
