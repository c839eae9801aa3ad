//! Training objectives: penalty-reduced focal loss on the class heatmaps,
//! focal-modulated BCE (or masked L1) on the center offsets, masked MSE on
//! the heading channels, and their weighted sum.
//!
//! Each loss is a fused op with a hand-derived backward; predictions carry
//! gradients, targets and masks are constants.

use serde::{Deserialize, Serialize};

use raddet_tensor::BackwardOp;

use crate::model::NetworkOutput;
use crate::{CoreError, Result, Scalar, Tensor};

/// Log clamp for probabilities.
pub const LOG_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetLossKind {
    /// `|t - p|^gamma * BCE(p, t)` on sigmoid outputs, masked.
    FocalBce,
    /// Plain L1 between decoded offsets and targets, masked.
    MaskedL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub focal_alpha: f64,
    pub focal_beta: f64,
    pub offset_gamma: f64,
    pub offset_kind: OffsetLossKind,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            focal_alpha: 2.0,
            focal_beta: 4.0,
            offset_gamma: 2.0,
            offset_kind: OffsetLossKind::FocalBce,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("focal_alpha", self.focal_alpha),
            ("focal_beta", self.focal_beta),
            ("offset_gamma", self.offset_gamma),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(CoreError::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CoreError::Config(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[inline]
fn clamp_p(p: f64) -> f64 {
    p.clamp(LOG_EPS, 1.0 - LOG_EPS)
}

struct HeatmapFocalBack {
    pred: Tensor,
    target: Tensor,
    alpha: f64,
    beta: f64,
    norm: f64,
}

impl BackwardOp<Scalar> for HeatmapFocalBack {
    fn parents(&self) -> Vec<Tensor> {
        vec![self.pred.clone(), self.target.clone()]
    }
    fn backward(&self, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        if !self.pred.track() {
            return vec![None, None];
        }
        let scale = g[0] / self.norm;
        let (a, b) = (self.alpha, self.beta);
        let grad = self
            .pred
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(&p_raw, &y)| {
                if !(LOG_EPS..=1.0 - LOG_EPS).contains(&p_raw) {
                    return 0.0; // clamped region
                }
                let p = p_raw;
                let d = if y == 1.0 {
                    a * (1.0 - p).powf(a - 1.0) * p.ln() - (1.0 - p).powf(a) / p
                } else {
                    -(1.0 - y).powf(b) * (a * p.powf(a - 1.0) * (1.0 - p).ln() - p.powf(a) / (1.0 - p))
                };
                scale * d
            })
            .collect();
        vec![Some(grad), None]
    }
}

/// Penalty-reduced pixel-wise focal loss for Gaussian heatmap targets.
/// Cells with `target == 1` are positives; the rest are weighted down by
/// `(1-target)^beta`. Normalized by the number of positives (at least 1).
pub fn heatmap_focal(pred: &Tensor, target: &Tensor, alpha: f64, beta: f64) -> Result<Tensor> {
    check_same("heatmap_focal", pred, target)?;
    let mut n_peaks = 0usize;
    let mut total = 0.0;
    for (&p_raw, &y) in pred.data().iter().zip(target.data()) {
        let p = clamp_p(p_raw);
        if y == 1.0 {
            n_peaks += 1;
            total -= (1.0 - p).powf(alpha) * p.ln();
        } else {
            total -= (1.0 - y).powf(beta) * p.powf(alpha) * (1.0 - p).ln();
        }
    }
    let norm = (n_peaks.max(1)) as f64;
    Ok(Tensor::from_op(
        &[1],
        vec![total / norm],
        Box::new(HeatmapFocalBack {
            pred: pred.clone(),
            target: target.clone(),
            alpha,
            beta,
            norm,
        }),
    ))
}

struct OffsetFocalBack {
    pred: Tensor,
    target: Tensor,
    mask: Tensor,
    gamma: f64,
    count: f64,
    plane: usize,
}

impl OffsetFocalBack {
    fn mask_at(&self, flat: usize) -> f64 {
        // pred is [N,2,H,W]; mask is [N,H,W] shared by both channels.
        let n = flat / (2 * self.plane);
        let s = flat % self.plane;
        self.mask.data()[n * self.plane + s]
    }
}

impl BackwardOp<Scalar> for OffsetFocalBack {
    fn parents(&self) -> Vec<Tensor> {
        vec![self.pred.clone(), self.target.clone(), self.mask.clone()]
    }
    fn backward(&self, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        if !self.pred.track() {
            return vec![None, None, None];
        }
        let scale = g[0] / self.count;
        let grad = self
            .pred
            .data()
            .iter()
            .zip(self.target.data())
            .enumerate()
            .map(|(i, (&p_raw, &o))| {
                if self.mask_at(i) == 0.0 || !(LOG_EPS..=1.0 - LOG_EPS).contains(&p_raw) {
                    return 0.0;
                }
                let p = p_raw;
                let t = (o + 1.0) / 2.0;
                let m = (t - p).abs();
                let bce = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
                let dmod = self.gamma * m.powf(self.gamma - 1.0) * (p - t).signum() * bce;
                let dbce = m.powf(self.gamma) * (p - t) / (p * (1.0 - p));
                scale * (dmod + dbce)
            })
            .collect();
        vec![Some(grad), None, None]
    }
}

/// Focal-modulated binary cross-entropy on sigmoid offset outputs: offsets
/// in `[-1,1]` are remapped to `(0,1)` targets; only masked cells
/// contribute, averaged over masked values (0 when the mask is empty).
pub fn offset_loss(pred: &Tensor, target_offset: &Tensor, mask: &Tensor, gamma: f64) -> Result<Tensor> {
    check_same("offset_loss", pred, target_offset)?;
    let plane = mask.numel() / pred.shape()[0];
    let mut count = 0usize;
    let mut total = 0.0;
    for (i, (&p_raw, &o)) in pred.data().iter().zip(target_offset.data()).enumerate() {
        let n = i / (2 * plane);
        let s = i % plane;
        if mask.data()[n * plane + s] == 0.0 {
            continue;
        }
        count += 1;
        let p = clamp_p(p_raw);
        let t = (o + 1.0) / 2.0;
        let m = (t - p).abs();
        let bce = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
        total += m.powf(gamma) * bce;
    }
    if count == 0 {
        return Ok(Tensor::scalar(0.0));
    }
    let count = count as f64;
    Ok(Tensor::from_op(
        &[1],
        vec![total / count],
        Box::new(OffsetFocalBack {
            pred: pred.clone(),
            target: target_offset.clone(),
            mask: mask.clone(),
            gamma,
            count,
            plane,
        }),
    ))
}

struct OffsetL1Back {
    pred: Tensor,
    target: Tensor,
    mask: Tensor,
    count: f64,
    plane: usize,
}

impl BackwardOp<Scalar> for OffsetL1Back {
    fn parents(&self) -> Vec<Tensor> {
        vec![self.pred.clone(), self.target.clone(), self.mask.clone()]
    }
    fn backward(&self, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        if !self.pred.track() {
            return vec![None, None, None];
        }
        let scale = g[0] / self.count;
        let grad = self
            .pred
            .data()
            .iter()
            .zip(self.target.data())
            .enumerate()
            .map(|(i, (&p, &o))| {
                let n = i / (2 * self.plane);
                let s = i % self.plane;
                if self.mask.data()[n * self.plane + s] == 0.0 {
                    return 0.0;
                }
                let d = 2.0 * p - 1.0 - o;
                scale * 2.0 * d.signum()
            })
            .collect();
        vec![Some(grad), None, None]
    }
}

/// Masked mean absolute error between decoded offsets (`2p - 1`) and the
/// raw offset targets.
pub fn offset_l1(pred: &Tensor, target_offset: &Tensor, mask: &Tensor) -> Result<Tensor> {
    check_same("offset_l1", pred, target_offset)?;
    let plane = mask.numel() / pred.shape()[0];
    let mut count = 0usize;
    let mut total = 0.0;
    for (i, (&p, &o)) in pred.data().iter().zip(target_offset.data()).enumerate() {
        let n = i / (2 * plane);
        let s = i % plane;
        if mask.data()[n * plane + s] == 0.0 {
            continue;
        }
        count += 1;
        total += (2.0 * p - 1.0 - o).abs();
    }
    if count == 0 {
        return Ok(Tensor::scalar(0.0));
    }
    let count = count as f64;
    Ok(Tensor::from_op(
        &[1],
        vec![total / count],
        Box::new(OffsetL1Back {
            pred: pred.clone(),
            target: target_offset.clone(),
            mask: mask.clone(),
            count,
            plane,
        }),
    ))
}

struct HeadingMseBack {
    pred: Tensor,
    target: Tensor,
    mask: Tensor,
    count: f64,
    plane: usize,
}

impl BackwardOp<Scalar> for HeadingMseBack {
    fn parents(&self) -> Vec<Tensor> {
        vec![self.pred.clone(), self.target.clone(), self.mask.clone()]
    }
    fn backward(&self, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        if !self.pred.track() {
            return vec![None, None, None];
        }
        let scale = g[0] / self.count;
        let grad = self
            .pred
            .data()
            .iter()
            .zip(self.target.data())
            .enumerate()
            .map(|(i, (&p, &t))| {
                let n = i / (2 * self.plane);
                let s = i % self.plane;
                if self.mask.data()[n * self.plane + s] == 0.0 {
                    0.0
                } else {
                    scale * 2.0 * (p - t)
                }
            })
            .collect();
        vec![Some(grad), None, None]
    }
}

/// Mean squared error over masked heading cells, both channels.
pub fn heading_mse(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
    check_same("heading_mse", pred, target)?;
    let plane = mask.numel() / pred.shape()[0];
    let mut count = 0usize;
    let mut total = 0.0;
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let n = i / (2 * plane);
        let s = i % plane;
        if mask.data()[n * plane + s] == 0.0 {
            continue;
        }
        count += 1;
        total += (p - t) * (p - t);
    }
    if count == 0 {
        return Ok(Tensor::scalar(0.0));
    }
    let count = count as f64;
    Ok(Tensor::from_op(
        &[1],
        vec![total / count],
        Box::new(HeadingMseBack {
            pred: pred.clone(),
            target: target.clone(),
            mask: mask.clone(),
            count,
            plane,
        }),
    ))
}

/// Batched target tensors matching a [`NetworkOutput`].
#[derive(Debug, Clone)]
pub struct BatchTargets {
    pub heatmap: Tensor,
    pub offset: Tensor,
    /// `[N, R, A]`
    pub offset_mask: Tensor,
    pub heading: Tensor,
    /// `[N, R/4, A/4]`
    pub heading_mask: Tensor,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub heatmap: f64,
    pub offset: f64,
    pub heading: f64,
}

/// Weighted total `w1*L_heatmap + w2*L_offset + w3*L_heading`; the breakdown
/// carries the unweighted per-term values.
pub fn total_loss(
    out: &NetworkOutput,
    targets: &BatchTargets,
    w: &LossWeights,
) -> Result<(Tensor, LossBreakdown)> {
    w.validate()?;
    let lb = heatmap_focal(&out.heatmap, &targets.heatmap, w.focal_alpha, w.focal_beta)?;
    let lc = match w.offset_kind {
        OffsetLossKind::FocalBce => {
            offset_loss(&out.offset, &targets.offset, &targets.offset_mask, w.offset_gamma)?
        }
        OffsetLossKind::MaskedL1 => offset_l1(&out.offset, &targets.offset, &targets.offset_mask)?,
    };
    let lh = heading_mse(&out.heading, &targets.heading, &targets.heading_mask)?;
    let breakdown = LossBreakdown {
        total: w.w1 * lb.item()? + w.w2 * lc.item()? + w.w3 * lh.item()?,
        heatmap: lb.item()?,
        offset: lc.item()?,
        heading: lh.item()?,
    };
    let total = lb.scale(w.w1).add(&lc.scale(w.w2))?.add(&lh.scale(w.w3))?;
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use raddet_tensor::grad_check;

    #[test]
    fn focal_perfect_prediction_is_near_zero() {
        let target = Tensor::new(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let pred = Tensor::new(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let l = heatmap_focal(&pred, &target, 2.0, 4.0).unwrap().item().unwrap();
        assert!(l.abs() < 1e-9, "loss {l}");
    }

    #[test]
    fn focal_single_peak_closed_form() {
        let target = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let pred = Tensor::new(&[1, 1, 1, 1], vec![0.5]).unwrap();
        let l = heatmap_focal(&pred, &target, 2.0, 4.0).unwrap().item().unwrap();
        let expect = 0.25 * 2f64.ln();
        assert!((l - expect).abs() < 1e-12, "{l} vs {expect}");
    }

    #[test]
    fn focal_decreases_as_peak_confidence_rises() {
        let target = Tensor::new(&[1, 1, 2, 1], vec![1.0, 0.0]).unwrap();
        let mut prev = f64::INFINITY;
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let pred = Tensor::new(&[1, 1, 2, 1], vec![p, 0.05]).unwrap();
            let l = heatmap_focal(&pred, &target, 2.0, 4.0).unwrap().item().unwrap();
            assert!(l < prev, "p={p}: {l} !< {prev}");
            prev = l;
        }
    }

    #[test]
    fn offset_empty_mask_and_exact_match_are_zero() {
        let pred = Tensor::new(&[1, 2, 1, 1], vec![0.3, 0.8]).unwrap();
        let tgt = Tensor::new(&[1, 2, 1, 1], vec![0.1, -0.2]).unwrap();
        let empty = Tensor::new(&[1, 1, 1], vec![0.0]).unwrap();
        let l = offset_loss(&pred, &tgt, &empty, 2.0).unwrap().item().unwrap();
        assert_eq!(l, 0.0);

        let mask = Tensor::new(&[1, 1, 1], vec![1.0]).unwrap();
        // p == t exactly: modulating factor kills the loss.
        let o = 0.5;
        let p = (o + 1.0) / 2.0;
        let pred = Tensor::new(&[1, 2, 1, 1], vec![p, p]).unwrap();
        let tgt = Tensor::new(&[1, 2, 1, 1], vec![o, o]).unwrap();
        let l = offset_loss(&pred, &tgt, &mask, 2.0).unwrap().item().unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn offset_closed_form_example() {
        // t = 0.75, p = 0.5, gamma = 2 -> 0.0625 * ln 2
        let pred = Tensor::new(&[1, 2, 1, 1], vec![0.5, 0.5]).unwrap();
        let tgt = Tensor::new(&[1, 2, 1, 1], vec![0.5, 0.5]).unwrap(); // o=0.5 -> t=0.75
        let mask = Tensor::new(&[1, 1, 1], vec![1.0]).unwrap();
        let l = offset_loss(&pred, &tgt, &mask, 2.0).unwrap().item().unwrap();
        let expect = 0.0625 * 2f64.ln();
        assert!((l - expect).abs() < 1e-12, "{l} vs {expect}");
    }

    #[test]
    fn heading_mse_cases() {
        let pred = Tensor::new(&[1, 2, 1, 1], vec![0.0, 0.0]).unwrap();
        let tgt = Tensor::new(&[1, 2, 1, 1], vec![0.0, 1.0]).unwrap();
        let mask = Tensor::new(&[1, 1, 1], vec![1.0]).unwrap();
        let l = heading_mse(&pred, &tgt, &mask).unwrap().item().unwrap();
        assert!((l - 0.5).abs() < 1e-15);

        let l = heading_mse(&tgt, &tgt, &mask).unwrap().item().unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn heading_mse_matches_loop_oracle() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pred: Vec<f64> = (0..2 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tgt: Vec<f64> = (0..2 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mask: Vec<f64> = (0..16).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();

        let mut total = 0.0;
        let mut count = 0;
        for ch in 0..2 {
            for s in 0..16 {
                if mask[s] == 1.0 {
                    total += (pred[ch * 16 + s] - tgt[ch * 16 + s]).powi(2);
                    count += 1;
                }
            }
        }
        let expect = if count == 0 { 0.0 } else { total / count as f64 };

        let p = Tensor::new(&[1, 2, 4, 4], pred).unwrap();
        let t = Tensor::new(&[1, 2, 4, 4], tgt).unwrap();
        let m = Tensor::new(&[1, 4, 4], mask).unwrap();
        let l = heading_mse(&p, &t, &m).unwrap().item().unwrap();
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn total_loss_weight_linearity() {
        let target_hm = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let pred_hm = Tensor::new(&[1, 1, 1, 1], vec![0.5]).unwrap();
        let off = Tensor::new(&[1, 2, 1, 1], vec![0.5, 0.5]).unwrap();
        let off_t = Tensor::new(&[1, 2, 1, 1], vec![0.5, 0.5]).unwrap();
        let mask = Tensor::new(&[1, 1, 1], vec![1.0]).unwrap();
        let hd = Tensor::new(&[1, 2, 1, 1], vec![0.0, 0.0]).unwrap();
        let hd_t = Tensor::new(&[1, 2, 1, 1], vec![0.0, 1.0]).unwrap();

        let out = NetworkOutput {
            heatmap: pred_hm,
            offset: off,
            heading: hd,
        };
        let targets = BatchTargets {
            heatmap: target_hm,
            offset: off_t,
            offset_mask: mask.clone(),
            heading: hd_t,
            heading_mask: mask,
        };
        let w1 = LossWeights::default();
        let (t1, b1) = total_loss(&out, &targets, &w1).unwrap();
        let w2 = LossWeights {
            w2: 2.0,
            ..LossWeights::default()
        };
        let (t2, b2) = total_loss(&out, &targets, &w2).unwrap();
        // Doubling w2 doubles the offset term exactly (power-of-two scale).
        assert_eq!(2.0 * (1.0 * b1.offset), 2.0 * b1.offset);
        assert_eq!(b1.offset, b2.offset);
        assert!(
            (t2.item().unwrap() - t1.item().unwrap() - b1.offset).abs() < 1e-15,
            "total should grow by one offset term"
        );

        // Expected composition of the closed forms.
        let expect = 0.25 * 2f64.ln() + 0.0625 * 2f64.ln() + 0.5;
        assert!((t1.item().unwrap() - expect).abs() < 1e-12);

        let zero = LossWeights {
            w1: 0.0,
            w2: 0.0,
            w3: 0.0,
            ..LossWeights::default()
        };
        let (t0, _) = total_loss(&out, &targets, &zero).unwrap();
        assert_eq!(t0.item().unwrap(), 0.0);
    }

    #[test]
    fn loss_gradients_pass_grad_check() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let hm_t: Vec<f64> = (0..16)
            .map(|i| if i == 5 { 1.0 } else { rng.gen_range(0.0..0.8) })
            .collect();
        let hm_p: Vec<f64> = (0..16).map(|_| rng.gen_range(0.1..0.9)).collect();
        let target = Tensor::new(&[1, 1, 4, 4], hm_t).unwrap();
        let x = Tensor::new(&[1, 1, 4, 4], hm_p).unwrap();
        let err = grad_check(|p| heatmap_focal(p, &target, 2.0, 4.0).map_err(tensor_err), &x, 1e-5)
            .unwrap();
        assert!(err < 1e-5, "heatmap focal grad err {err}");

        let off_t = Tensor::new(&[1, 2, 2, 2], (0..8).map(|_| rng.gen_range(-0.9..0.9)).collect())
            .unwrap();
        let off_p = Tensor::new(&[1, 2, 2, 2], (0..8).map(|_| rng.gen_range(0.15..0.85)).collect())
            .unwrap();
        let mask = Tensor::new(&[1, 2, 2], vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let err = grad_check(
            |p| offset_loss(p, &off_t, &mask, 2.0).map_err(tensor_err),
            &off_p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "offset focal grad err {err}");

        let hd_t = Tensor::new(&[1, 2, 2, 2], (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let hd_p = Tensor::new(&[1, 2, 2, 2], (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let err = grad_check(
            |p| heading_mse(p, &hd_t, &mask).map_err(tensor_err),
            &hd_p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "heading mse grad err {err}");
    }

    fn tensor_err(e: CoreError) -> raddet_tensor::TensorError {
        raddet_tensor::TensorError::Invalid {
            op: "loss",
            msg: e.to_string(),
        }
    }
}
