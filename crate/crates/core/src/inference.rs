//! Decoding network output into object detections: kernel peak picking,
//! sub-bin center-offset correction, distance NMS, heading readout.

use serde::{Deserialize, Serialize};

use crate::geometry::RadarGeometry;
use crate::labeling::{HEADING_DOWNSCALE, OFFSET_HALF_WIDTH};
use crate::model::NetworkOutput;
use crate::{Map2d, Tensor};

/// One decoded object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: u8,
    /// Fractional (range, angle) bins after offset correction.
    pub pos_bins: (f64, f64),
    /// Bird's-eye Cartesian position in meters.
    pub pos_cart: (f64, f64),
    pub confidence: f64,
    /// Absent when the heading readout is degenerate (zero vector).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading_rad: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub peak_kernel: usize,
    pub score_thresh: f64,
    pub dnms_radius_m: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            peak_kernel: 5,
            score_thresh: 0.1,
            dnms_radius_m: 1.0,
        }
    }
}

/// Raw peak before offset correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub class_id: u8,
    pub r: usize,
    pub a: usize,
    pub score: f64,
}

/// A cell is a peak when it dominates its `kernel x kernel` neighborhood
/// within its class channel; equal-valued neighbors lose to the cell with
/// the smaller `(r, a)` (so a plateau yields exactly one peak). Peaks below
/// `score_thresh` are discarded.
pub fn detect_peaks(heatmaps: &[Map2d], kernel: usize, score_thresh: f64) -> Vec<Peak> {
    assert!(kernel % 2 == 1, "kernel must be odd");
    let half = (kernel / 2) as isize;
    let mut peaks = Vec::new();
    for (class_id, map) in heatmaps.iter().enumerate() {
        for r in 0..map.rows {
            for a in 0..map.cols {
                let v = map.at(r, a);
                if v <= score_thresh {
                    continue;
                }
                let mut is_peak = true;
                'window: for dr in -half..=half {
                    for da in -half..=half {
                        if dr == 0 && da == 0 {
                            continue;
                        }
                        let (qr, qa) = (r as isize + dr, a as isize + da);
                        if qr < 0 || qa < 0 || qr >= map.rows as isize || qa >= map.cols as isize {
                            continue;
                        }
                        let q = map.at(qr as usize, qa as usize);
                        if q > v || (q == v && (qr as usize, qa as usize) < (r, a)) {
                            is_peak = false;
                            break 'window;
                        }
                    }
                }
                if is_peak {
                    peaks.push(Peak {
                        class_id: class_id as u8,
                        r,
                        a,
                        score: v,
                    });
                }
            }
        }
    }
    peaks
}

/// Shifts each peak by its cell's offset values (scaled by the patch
/// half-width), clamping to map bounds; fractional positions are kept.
pub fn apply_offsets(peaks: &[Peak], off_r: &Map2d, off_a: &Map2d) -> Vec<(Peak, (f64, f64))> {
    peaks
        .iter()
        .map(|p| {
            let r = (p.r as f64 + OFFSET_HALF_WIDTH * off_r.at(p.r, p.a))
                .clamp(0.0, (off_r.rows - 1) as f64);
            let a = (p.a as f64 + OFFSET_HALF_WIDTH * off_a.at(p.r, p.a))
                .clamp(0.0, (off_a.cols - 1) as f64);
            (*p, (r, a))
        })
        .collect()
}

/// Greedy distance NMS: detections are visited in order of descending
/// confidence (ties broken by class then position for determinism) and
/// suppressed when closer than `radius_m` to any kept detection, regardless
/// of class.
pub fn dnms(mut detections: Vec<Detection>, radius_m: f64) -> Vec<Detection> {
    detections.sort_by(|x, y| {
        y.confidence
            .partial_cmp(&x.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.class_id.cmp(&y.class_id))
            .then_with(|| x.pos_bins.partial_cmp(&y.pos_bins).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for d in detections {
        let clear = kept.iter().all(|k| {
            let dx = d.pos_cart.0 - k.pos_cart.0;
            let dy = d.pos_cart.1 - k.pos_cart.1;
            (dx * dx + dy * dy).sqrt() >= radius_m
        });
        if clear {
            kept.push(d);
        }
    }
    kept
}

/// Reads the heading at a (corrected) position from the quarter-resolution
/// sin/cos maps; `(0, 0)` means no heading was written there.
pub fn decode_heading(r_bin: f64, a_bin: f64, sin_map: &Map2d, cos_map: &Map2d) -> Option<f64> {
    let qr = ((r_bin / HEADING_DOWNSCALE as f64).floor() as usize).min(sin_map.rows - 1);
    let qa = ((a_bin / HEADING_DOWNSCALE as f64).floor() as usize).min(sin_map.cols - 1);
    let (s, c) = (sin_map.at(qr, qa), cos_map.at(qr, qa));
    if s == 0.0 && c == 0.0 {
        None
    } else {
        Some(s.atan2(c))
    }
}

/// Per-frame decoded map stack (class heatmaps, raw offsets, heading).
pub struct FrameMaps {
    pub heatmaps: Vec<Map2d>,
    /// Offsets already decoded to `[-1, 1]`.
    pub offsets: [Map2d; 2],
    pub heading: [Map2d; 2],
}

impl FrameMaps {
    /// Extracts sample `n` of a batched network output, decoding the offset
    /// channels from sigmoid space.
    pub fn from_output(out: &NetworkOutput, n: usize) -> FrameMaps {
        let heatmaps = split_channels(&out.heatmap, n);
        let mut offsets = split_channels(&out.offset, n);
        for m in &mut offsets {
            for v in &mut m.data {
                *v = 2.0 * *v - 1.0;
            }
        }
        let heading = split_channels(&out.heading, n);
        FrameMaps {
            heatmaps,
            offsets: [offsets[0].clone(), offsets[1].clone()],
            heading: [heading[0].clone(), heading[1].clone()],
        }
    }

    /// Treats ground-truth target maps as if the network had produced them.
    pub fn from_targets(t: &crate::labeling::TargetMaps) -> FrameMaps {
        FrameMaps {
            heatmaps: t.heatmap.clone(),
            offsets: [t.offset[0].clone(), t.offset[1].clone()],
            heading: [t.heading[0].clone(), t.heading[1].clone()],
        }
    }
}

fn split_channels(t: &Tensor, n: usize) -> Vec<Map2d> {
    let s = t.shape();
    let (c, h, w) = (s[1], s[2], s[3]);
    (0..c)
        .map(|ch| {
            let base = (n * c + ch) * h * w;
            Map2d::from_vec(h, w, t.data()[base..base + h * w].to_vec())
        })
        .collect()
}

/// Full decode: peaks, offset correction, distance NMS, heading readout.
pub fn decode_frame(maps: &FrameMaps, geometry: &RadarGeometry, params: &DecodeParams) -> Vec<Detection> {
    let peaks = detect_peaks(&maps.heatmaps, params.peak_kernel, params.score_thresh);
    let corrected = apply_offsets(&peaks, &maps.offsets[0], &maps.offsets[1]);
    let detections = corrected
        .into_iter()
        .map(|(p, (r, a))| Detection {
            class_id: p.class_id,
            pos_bins: (r, a),
            pos_cart: geometry.bins_to_cartesian(r, a),
            confidence: p.score,
            heading_rad: None,
        })
        .collect();
    let mut kept = dnms(detections, params.dnms_radius_m);
    for d in &mut kept {
        d.heading_rad = decode_heading(d.pos_bins.0, d.pos_bins.1, &maps.heading[0], &maps.heading[1]);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::render_plain_gaussian;

    #[test]
    fn no_peaks_on_zero_map() {
        let maps = vec![Map2d::zeros(16, 16)];
        assert!(detect_peaks(&maps, 5, 0.1).is_empty());
    }

    #[test]
    fn single_gaussian_single_peak() {
        let mut m = render_plain_gaussian((8.0, 9.0), 1.5, 16, 16);
        for v in &mut m.data {
            *v *= 0.9;
        }
        let peaks = detect_peaks(&[m], 5, 0.1);
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].r, peaks[0].a), (8, 9));
        assert!((peaks[0].score - 0.9).abs() < 1e-12);
    }

    #[test]
    fn plateau_keeps_lexicographically_first() {
        let mut m = Map2d::zeros(12, 12);
        for r in 4..8 {
            for a in 4..8 {
                *m.at_mut(r, a) = 0.5;
            }
        }
        let peaks = detect_peaks(&[m], 5, 0.1);
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].r, peaks[0].a), (4, 4));
    }

    #[test]
    fn peak_count_monotone_in_threshold() {
        let mut m = render_plain_gaussian((4.0, 4.0), 1.0, 16, 16);
        let second = render_plain_gaussian((12.0, 12.0), 1.0, 16, 16);
        for (a, b) in m.data.iter_mut().zip(&second.data) {
            *a = a.max(0.4 * b);
        }
        let mut prev = usize::MAX;
        for thresh in [0.05, 0.2, 0.45, 0.9] {
            let n = detect_peaks(&[m.clone()], 5, thresh).len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn offsets_shift_and_clamp() {
        let peaks = vec![Peak {
            class_id: 0,
            r: 5,
            a: 5,
            score: 0.9,
        }];
        let mut off_r = Map2d::zeros(16, 16);
        let off_a = Map2d::zeros(16, 16);
        *off_r.at_mut(5, 5) = 0.125;
        let out = apply_offsets(&peaks, &off_r, &off_a);
        assert_eq!(out[0].1, (5.5, 5.0));

        let zero = apply_offsets(&peaks, &Map2d::zeros(16, 16), &Map2d::zeros(16, 16));
        assert_eq!(zero[0].1, (5.0, 5.0));
    }

    #[test]
    fn dnms_suppresses_near_pairs() {
        let mk = |x: f64, conf: f64| Detection {
            class_id: 0,
            pos_bins: (0.0, 0.0),
            pos_cart: (x, 10.0),
            confidence: conf,
            heading_rad: None,
        };
        let kept = dnms(vec![mk(0.0, 0.8), mk(0.5, 0.9)], 1.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);

        let kept = dnms(vec![mk(0.0, 0.8), mk(2.0, 0.9), mk(4.0, 0.3)], 1.0);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn dnms_matches_quadratic_oracle_on_random_input() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let dets: Vec<Detection> = (0..20)
                .map(|i| Detection {
                    class_id: (i % 3) as u8,
                    pos_bins: (i as f64, i as f64),
                    pos_cart: (rng.gen_range(-10.0..10.0), rng.gen_range(0.0..20.0)),
                    confidence: rng.gen_range(0.01..1.0),
                    heading_rad: None,
                })
                .collect();
            let kept = dnms(dets.clone(), 2.0);

            // Exhaustive reference: repeatedly take the global best, delete
            // everything within the radius.
            let mut pool = dets;
            let mut expect = Vec::new();
            while !pool.is_empty() {
                let best = pool
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.confidence.partial_cmp(&b.1.confidence).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                let b = pool.remove(best);
                pool.retain(|d| {
                    let dx = d.pos_cart.0 - b.pos_cart.0;
                    let dy = d.pos_cart.1 - b.pos_cart.1;
                    (dx * dx + dy * dy).sqrt() >= 2.0
                });
                expect.push(b);
            }
            assert_eq!(kept.len(), expect.len());
            for k in &kept {
                assert!(expect.iter().any(|e| e == k));
            }
        }
    }

    #[test]
    fn heading_decode_cases() {
        let mut s = Map2d::zeros(4, 4);
        let mut c = Map2d::zeros(4, 4);
        *s.at_mut(1, 1) = 0.0;
        *c.at_mut(1, 1) = 1.0;
        assert_eq!(decode_heading(4.0, 6.0, &s, &c), Some(0.0));

        let v = -(2f64.sqrt()) / 2.0;
        *s.at_mut(2, 2) = v;
        *c.at_mut(2, 2) = v;
        let theta = decode_heading(8.0, 8.0, &s, &c).unwrap();
        assert!((theta - (-3.0 * std::f64::consts::FRAC_PI_4)).abs() < 1e-12);

        assert_eq!(decode_heading(0.0, 0.0, &s, &c), None);
    }
}
