//! Training-target construction: spectrum-adaptive bivariate Gaussian
//! heatmaps, fixed-width Gaussian baseline heatmaps, sub-bin center-offset
//! patches, heading sin/cos maps, and spline-based heading ground truth.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Map2d, Result};

pub const NUM_CLASSES: usize = 3;
/// Offset patch edge (cells) and the half-width used to normalize offsets.
pub const OFFSET_PATCH: usize = 9;
pub const OFFSET_HALF_WIDTH: f64 = 4.0;
/// Heading maps live on this subsampling of the range-angle grid.
pub const HEADING_DOWNSCALE: usize = 4;
/// Heading values are written in a 3x3 patch on the quarter grid.
pub const HEADING_PATCH: usize = 3;
pub const SIGMA_MIN_BINS: f64 = 0.5;
pub const RHO_MAX: f64 = 0.99;
/// Rendered Gaussians are cut beyond this Mahalanobis distance.
pub const RENDER_CUTOFF_SIGMA: f64 = 4.0;

/// One labeled object on the range-angle grid. Boxes are inclusive integer
/// bin rectangles `[r0, a0, r1, a1]` / `[r0, d0, r1, d1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: u8,
    pub center_bin_r: f64,
    pub center_bin_a: f64,
    pub box_ra: [usize; 4],
    pub box_rd: [usize; 4],
    pub heading_rad: f64,
}

/// Snaps a fractional bin coordinate onto a 1/256-bin grid, avoiding exact
/// half-bin fractions. On this grid, mirroring about the angle axis
/// (`c -> bins-1-c`) is exact in `f64`, which is what makes the horizontal
/// flip augmentation commute with label construction bit-for-bit.
pub fn quantize_center(v: f64) -> f64 {
    let q = (v * 256.0).round() / 256.0;
    if (q.fract().abs() - 0.5).abs() < 1e-12 {
        q + 1.0 / 256.0
    } else {
        q
    }
}

/// Mean/covariance of a 2-D Gaussian in bin coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateParams {
    pub mu: (f64, f64),
    pub sigma: (f64, f64),
    pub rho: f64,
}

impl BivariateParams {
    /// Applies the domain invariants: floor on the sigmas, cap on |rho|.
    pub fn clamped(mut self) -> Self {
        self.sigma.0 = self.sigma.0.max(SIGMA_MIN_BINS);
        self.sigma.1 = self.sigma.1.max(SIGMA_MIN_BINS);
        self.rho = self.rho.clamp(-RHO_MAX, RHO_MAX);
        self
    }

    /// Un-normalized density of the full bivariate normal at `(r, a)`.
    pub fn density(&self, r: f64, a: f64) -> f64 {
        let norm = 1.0
            / (2.0 * std::f64::consts::PI
                * self.sigma.0
                * self.sigma.1
                * (1.0 - self.rho * self.rho).sqrt());
        norm * (-0.5 * self.mahalanobis_sq(r, a)).exp()
    }

    /// Squared Mahalanobis distance of `(r, a)` from the mean.
    ///
    /// The expression is arranged so that mirroring the angle axis (negating
    /// `a - mu_a` and `rho`) reproduces the same value bit-for-bit.
    pub fn mahalanobis_sq(&self, r: f64, a: f64) -> f64 {
        let u = (r - self.mu.0) / self.sigma.0;
        let v = (a - self.mu.1) / self.sigma.1;
        (u * u - 2.0 * ((self.rho * u) * v) + v * v) / (1.0 - self.rho * self.rho)
    }
}

/// Variance shrinkage caused by keeping only the bins whose normalized
/// intensity exceeds `threshold`: a Gaussian truncated at the matching
/// Mahalanobis contour keeps this fraction of its variance.
pub fn truncation_variance_factor(threshold: f64) -> f64 {
    if threshold <= 0.0 {
        return 1.0;
    }
    let t = -2.0 * threshold.ln(); // contour Q = t survives
    1.0 - t * threshold / (2.0 * (1.0 - threshold))
}

/// Measures mean and covariance of the spectrum blob inside `box_ra` on the
/// range-angle map: normalize the crop by its peak, drop bins below
/// `mask_threshold`, take intensity-weighted moments, and undo the
/// truncation bias so the recovered sigmas match the underlying blob.
///
/// Falls back to the box center with minimal spread (and logs a warning)
/// when the mask removes everything.
///
/// Columns are accumulated in symmetric pairs about the box center and the
/// recovered mean is snapped to the 1/256-bin grid, so measuring a mirrored
/// map yields exactly mirrored parameters.
pub fn bivariate_from_spectrum(
    ra: &Map2d,
    box_ra: [usize; 4],
    mask_threshold: f64,
) -> Result<BivariateParams> {
    let [r0, a0, r1, a1] = box_ra;
    if r1 < r0 || a1 < a0 || r1 >= ra.rows || a1 >= ra.cols {
        return Err(CoreError::Labeling(format!(
            "box {box_ra:?} invalid for {}x{} map",
            ra.rows, ra.cols
        )));
    }
    let mut peak = 0.0f64;
    for r in r0..=r1 {
        for a in a0..=a1 {
            peak = peak.max(ra.at(r, a));
        }
    }
    if peak <= 0.0 {
        return Err(CoreError::Labeling(format!(
            "box {box_ra:?} contains no energy"
        )));
    }

    // Centered coordinates keep the moment sums well conditioned.
    let cr = (r0 + r1) as f64 / 2.0;
    let ca = (a0 + a1) as f64 / 2.0;
    // Masked, peak-normalized weight or 0.
    let weight = |r: usize, a: usize| -> f64 {
        let w = ra.at(r, a) / peak;
        if w < mask_threshold {
            0.0
        } else {
            w
        }
    };
    // Sweep in mirror pairs of columns, adding each pair before accumulating.
    let pair_sum = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for r in r0..=r1 {
            for i in 0..=(a1 - a0) / 2 {
                let (l, rt) = (a0 + i, a1 - i);
                acc += if l == rt { f(r, l) } else { f(r, l) + f(r, rt) };
            }
        }
        acc
    };

    let w_sum = pair_sum(&|r, a| weight(r, a));
    if w_sum <= 0.0 {
        log::warn!("bivariate_from_spectrum: mask removed all bins in {box_ra:?}, using box center");
        return Ok(BivariateParams {
            mu: (cr, ca),
            sigma: (SIGMA_MIN_BINS, SIGMA_MIN_BINS),
            rho: 0.0,
        });
    }
    let mu_r = pair_sum(&|r, a| weight(r, a) * (r as f64 - cr)) / w_sum;
    let mu_a = pair_sum(&|r, a| weight(r, a) * (a as f64 - ca)) / w_sum;
    let dr = |r: usize| r as f64 - cr - mu_r;
    let da = |a: usize| a as f64 - ca - mu_a;
    let vrr = pair_sum(&|r, a| weight(r, a) * (dr(r) * dr(r))) / w_sum;
    let vaa = pair_sum(&|r, a| weight(r, a) * (da(a) * da(a))) / w_sum;
    let vra = pair_sum(&|r, a| weight(r, a) * (dr(r) * da(a))) / w_sum;

    let k = truncation_variance_factor(mask_threshold);
    let sigma_r = (vrr / k).max(0.0).sqrt();
    let sigma_a = (vaa / k).max(0.0).sqrt();
    let rho = if sigma_r > 0.0 && sigma_a > 0.0 {
        (vra / k) / (sigma_r * sigma_a)
    } else {
        0.0
    };
    Ok(BivariateParams {
        mu: (quantize_center(cr + mu_r), quantize_center(ca + mu_a)),
        sigma: (sigma_r, sigma_a),
        rho,
    }
    .clamped())
}

/// Renders the bivariate normal onto the bin grid, peak-normalized to 1 at
/// the mean and zeroed outside the cutoff ellipse.
pub fn render_bivariate(params: &BivariateParams, rows: usize, cols: usize) -> Map2d {
    let p = params.clamped();
    let cutoff = RENDER_CUTOFF_SIGMA * RENDER_CUTOFF_SIGMA;
    let mut out = Map2d::zeros(rows, cols);
    for r in 0..rows {
        for a in 0..cols {
            let q = p.mahalanobis_sq(r as f64, a as f64);
            if q <= cutoff {
                *out.at_mut(r, a) = (-0.5 * q).exp();
            }
        }
    }
    out
}

/// Fixed-width isotropic baseline: `render_bivariate` with equal sigmas and
/// no correlation.
pub fn render_plain_gaussian(center: (f64, f64), sigma_bins: f64, rows: usize, cols: usize) -> Map2d {
    render_bivariate(
        &BivariateParams {
            mu: center,
            sigma: (sigma_bins, sigma_bins),
            rho: 0.0,
        },
        rows,
        cols,
    )
}

/// Default baseline width for a given grid: 1/32 of the smaller extent.
pub fn plain_gaussian_sigma(rows: usize, cols: usize) -> f64 {
    (rows.min(cols) as f64 / 32.0).max(SIGMA_MIN_BINS)
}

/// Nearest integer cell of a fractional center (ties to even; simulator
/// centers are quantized away from ties).
fn nearest_cell(v: f64, len: usize) -> usize {
    let n = round_ties_even(v).max(0.0);
    (n as usize).min(len - 1)
}

fn round_ties_even(v: f64) -> f64 {
    let r = v.round();
    if (v.fract().abs() - 0.5).abs() < f64::EPSILON * v.abs().max(1.0) {
        let lower = v.floor();
        let upper = v.ceil();
        if (lower as i64) % 2 == 0 {
            lower
        } else {
            upper
        }
    } else {
        r
    }
}

/// Per-cell normalized displacements toward each annotation's sub-bin
/// center, written in a `patch x patch` region around the rounded center;
/// overlaps resolve to the nearer center. Returns the two offset channels
/// (range, angle) and the validity mask.
pub fn offset_targets(
    annotations: &[Annotation],
    rows: usize,
    cols: usize,
    patch: usize,
) -> Result<(Map2d, Map2d, Map2d)> {
    if patch % 2 == 0 {
        return Err(CoreError::Labeling(format!("patch must be odd, got {patch}")));
    }
    let half = (patch / 2) as isize;
    let mut off_r = Map2d::zeros(rows, cols);
    let mut off_a = Map2d::zeros(rows, cols);
    let mut mask = Map2d::zeros(rows, cols);
    // Distance of the current owner of each cell, for overlap resolution.
    let mut owner_d2 = vec![f64::INFINITY; rows * cols];

    for ann in annotations {
        let (mu_r, mu_a) = (ann.center_bin_r, ann.center_bin_a);
        let cr = nearest_cell(mu_r, rows) as isize;
        let ca = nearest_cell(mu_a, cols) as isize;
        for pr in (cr - half)..=(cr + half) {
            if pr < 0 || pr >= rows as isize {
                continue;
            }
            for pa in (ca - half)..=(ca + half) {
                if pa < 0 || pa >= cols as isize {
                    continue;
                }
                let dr = mu_r - pr as f64;
                let da = mu_a - pa as f64;
                let d2 = dr * dr + da * da;
                let idx = pr as usize * cols + pa as usize;
                if d2 >= owner_d2[idx] {
                    continue;
                }
                owner_d2[idx] = d2;
                off_r.data[idx] = dr / OFFSET_HALF_WIDTH;
                off_a.data[idx] = da / OFFSET_HALF_WIDTH;
                mask.data[idx] = 1.0;
            }
        }
    }
    Ok((off_r, off_a, mask))
}

/// Heading encoded as `(sin, cos)`, computed symmetrically so that
/// `encode(-theta)` is exactly the sign-flipped sine channel.
pub fn encode_heading(theta: f64) -> (f64, f64) {
    let s = theta.abs().sin();
    let s = if theta < 0.0 { -s } else { s };
    (s, theta.abs().cos())
}

/// Quarter-resolution sin/cos heading maps with a 3x3 patch around each
/// annotation's (rounded) center cell; overlaps resolve to the nearer center.
pub fn heading_targets(
    annotations: &[Annotation],
    rows: usize,
    cols: usize,
) -> Result<(Map2d, Map2d, Map2d)> {
    if rows % HEADING_DOWNSCALE != 0 || cols % HEADING_DOWNSCALE != 0 {
        return Err(CoreError::Labeling(format!(
            "map {rows}x{cols} not divisible by {HEADING_DOWNSCALE}"
        )));
    }
    let (qr, qa) = (rows / HEADING_DOWNSCALE, cols / HEADING_DOWNSCALE);
    let half = (HEADING_PATCH / 2) as isize;
    let mut sin_map = Map2d::zeros(qr, qa);
    let mut cos_map = Map2d::zeros(qr, qa);
    let mut mask = Map2d::zeros(qr, qa);
    let mut owner_d2 = vec![f64::INFINITY; qr * qa];

    for ann in annotations {
        let cr = (nearest_cell(ann.center_bin_r, rows) / HEADING_DOWNSCALE) as isize;
        let ca = (nearest_cell(ann.center_bin_a, cols) / HEADING_DOWNSCALE) as isize;
        let (s, c) = encode_heading(ann.heading_rad);
        let (mu_qr, mu_qa) = (
            ann.center_bin_r / HEADING_DOWNSCALE as f64,
            ann.center_bin_a / HEADING_DOWNSCALE as f64,
        );
        for pr in (cr - half)..=(cr + half) {
            if pr < 0 || pr >= qr as isize {
                continue;
            }
            for pa in (ca - half)..=(ca + half) {
                if pa < 0 || pa >= qa as isize {
                    continue;
                }
                let dr = mu_qr - pr as f64;
                let da = mu_qa - pa as f64;
                let d2 = dr * dr + da * da;
                let idx = pr as usize * qa + pa as usize;
                if d2 >= owner_d2[idx] {
                    continue;
                }
                owner_d2[idx] = d2;
                sin_map.data[idx] = s;
                cos_map.data[idx] = c;
                mask.data[idx] = 1.0;
            }
        }
    }
    Ok((sin_map, cos_map, mask))
}

/// Ground-truth label choice for the heatmap channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Spectrum-measured mean/covariance per object.
    Bivariate,
    /// One fixed-width isotropic Gaussian for everything.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct LabelConfig {
    pub mode: LabelMode,
    pub mask_threshold: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            mode: LabelMode::Bivariate,
            mask_threshold: 0.5,
        }
    }
}

/// Full target stack for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaps {
    /// One peak-normalized heatmap per class.
    pub heatmap: Vec<Map2d>,
    /// Range and angle offset channels.
    pub offset: [Map2d; 2],
    pub offset_mask: Map2d,
    /// Quarter-resolution sin and cos channels.
    pub heading: [Map2d; 2],
    pub heading_mask: Map2d,
}

/// Builds all training targets for one frame's annotations. In bivariate
/// mode the Gaussian parameters are measured from the frame's range-angle
/// map; overlapping heatmaps combine cell-wise by maximum so every
/// annotation keeps its unit peak.
pub fn build_targets(
    ra: &Map2d,
    annotations: &[Annotation],
    cfg: &LabelConfig,
) -> Result<TargetMaps> {
    let (rows, cols) = (ra.rows, ra.cols);
    let mut heatmap = vec![Map2d::zeros(rows, cols); NUM_CLASSES];
    for ann in annotations {
        if ann.class_id as usize >= NUM_CLASSES {
            return Err(CoreError::Labeling(format!(
                "class id {} out of range",
                ann.class_id
            )));
        }
        let mut rendered = match cfg.mode {
            LabelMode::Bivariate => {
                let p = bivariate_from_spectrum(ra, ann.box_ra, cfg.mask_threshold)?;
                render_bivariate(&p, rows, cols)
            }
            LabelMode::Gaussian => render_plain_gaussian(
                (ann.center_bin_r, ann.center_bin_a),
                plain_gaussian_sigma(rows, cols),
                rows,
                cols,
            ),
        };
        // Renormalize by the grid maximum so the peak *cell* is exactly 1
        // (sub-bin means otherwise leave every cell below 1, starving the
        // focal loss of positives).
        let peak = rendered.data.iter().cloned().fold(0.0f64, f64::max);
        if peak > 0.0 {
            for v in &mut rendered.data {
                *v /= peak;
            }
        }
        let dst = &mut heatmap[ann.class_id as usize];
        for (d, s) in dst.data.iter_mut().zip(&rendered.data) {
            if *s > *d {
                *d = *s;
            }
        }
    }
    let (off_r, off_a, offset_mask) = offset_targets(annotations, rows, cols, OFFSET_PATCH)?;
    let (sin_map, cos_map, heading_mask) = heading_targets(annotations, rows, cols)?;
    Ok(TargetMaps {
        heatmap,
        offset: [off_r, off_a],
        offset_mask,
        heading: [sin_map, cos_map],
        heading_mask,
    })
}

/// Headings along a sampled trajectory: a natural cubic spline is fitted to
/// `x(t)` and `y(t)` and differentiated at each sample. Two samples
/// degenerate to the straight-line direction.
pub fn heading_from_trajectory(samples: &[(f64, f64, f64)]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(CoreError::Labeling(
            "trajectory needs at least 2 samples".into(),
        ));
    }
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(CoreError::Labeling(format!(
                "timestamps must strictly increase ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.2).collect();
    if samples.len() == 2 {
        let theta = (xs[1] - xs[0]).atan2(ys[1] - ys[0]);
        return Ok(vec![theta; 2]);
    }
    let dx = spline_derivatives(&ts, &xs);
    let dy = spline_derivatives(&ts, &ys);
    Ok(dx.iter().zip(&dy).map(|(&x, &y)| x.atan2(y)).collect())
}

/// First derivatives of the natural cubic spline through `(t, y)` at each
/// knot (tridiagonal solve for the second derivatives, then the standard
/// endpoint formulas).
fn spline_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();

    // Thomas algorithm on the interior second-derivative system.
    let mut m = vec![0.0; n];
    if n > 2 {
        let rows = n - 2;
        let mut diag = vec![0.0; rows];
        let mut upper = vec![0.0; rows];
        let mut rhs = vec![0.0; rows];
        for i in 0..rows {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..rows {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        m[rows] = rhs[rows - 1] / diag[rows - 1];
        for i in (1..rows).rev() {
            m[i] = (rhs[i - 1] - upper[i - 1] * m[i]) / diag[i - 1];
        }
    }

    let mut d = vec![0.0; n];
    for i in 0..n - 1 {
        d[i] = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
    }
    let l = n - 1;
    d[l] = (y[l] - y[l - 1]) / h[l - 1] + h[l - 1] * (m[l - 1] + 2.0 * m[l]) / 6.0;
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(class: u8, r: f64, a: f64, heading: f64) -> Annotation {
        Annotation {
            class_id: class,
            center_bin_r: r,
            center_bin_a: a,
            box_ra: [0, 0, 1, 1],
            box_rd: [0, 0, 1, 1],
            heading_rad: heading,
        }
    }

    #[test]
    fn single_bin_degenerates_to_sigma_min() {
        let mut ra = Map2d::zeros(16, 16);
        *ra.at_mut(7, 9) = 2.0;
        let p = bivariate_from_spectrum(&ra, [4, 6, 10, 12], 0.5).unwrap();
        assert_eq!(p.mu, (7.0, 9.0));
        assert_eq!(p.sigma, (SIGMA_MIN_BINS, SIGMA_MIN_BINS));
        assert_eq!(p.rho, 0.0);
    }

    #[test]
    fn symmetric_blob_has_zero_rho() {
        let params = BivariateParams {
            mu: (16.0, 16.0),
            sigma: (2.0, 2.0),
            rho: 0.0,
        };
        let ra = render_bivariate(&params, 32, 32);
        let p = bivariate_from_spectrum(&ra, [8, 8, 24, 24], 0.5).unwrap();
        assert!(p.rho.abs() < 1e-6, "rho {}", p.rho);
        assert!((p.mu.0 - 16.0).abs() < 1e-9);
    }

    #[test]
    fn sigma_recovery_within_15_percent() {
        let params = BivariateParams {
            mu: (20.0, 20.25),
            sigma: (2.0, 3.5),
            rho: 0.0,
        };
        let ra = render_bivariate(&params, 48, 48);
        let p = bivariate_from_spectrum(&ra, [8, 6, 34, 36], 0.5).unwrap();
        assert!((p.sigma.0 - 2.0).abs() / 2.0 < 0.15, "sigma_r {}", p.sigma.0);
        assert!((p.sigma.1 - 3.5).abs() / 3.5 < 0.15, "sigma_a {}", p.sigma.1);
        assert!((p.mu.0 - 20.0).abs() < 0.5);
        assert!((p.mu.1 - 20.25).abs() < 0.5);
    }

    #[test]
    fn render_peak_at_rounded_mean_and_symmetry() {
        let params = BivariateParams {
            mu: (10.2, 12.8),
            sigma: (1.5, 2.0),
            rho: 0.3,
        };
        let m = render_bivariate(&params, 24, 24);
        assert_eq!(m.argmax(), (10, 13));

        let iso = BivariateParams {
            mu: (12.0, 12.0),
            sigma: (2.0, 2.0),
            rho: 0.0,
        };
        let m = render_bivariate(&iso, 24, 24);
        for k in 1..4 {
            let a = m.at(12 + k, 12);
            let b = m.at(12, 12 + k);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        // Numeric quadrature of the full density over the grid.
        for (sr, sa, rho) in [(2.0, 2.0, 0.0), (2.5, 3.0, 0.4), (2.0, 4.0, -0.6)] {
            let p = BivariateParams {
                mu: (24.0, 24.0),
                sigma: (sr, sa),
                rho,
            };
            let mut total = 0.0;
            for r in 0..48 {
                for a in 0..48 {
                    total += p.density(r as f64, a as f64);
                }
            }
            assert!((total - 1.0).abs() < 0.02, "integral {total}");
        }
    }

    #[test]
    fn plain_gaussian_closed_form() {
        let m = render_plain_gaussian((16.0, 16.0), 2.0, 32, 32);
        assert_eq!(m.at(16, 16), 1.0);
        assert!((m.at(18, 16) - (-0.5f64).exp()).abs() < 1e-12);

        let b = render_bivariate(
            &BivariateParams {
                mu: (16.0, 16.0),
                sigma: (2.0, 2.0),
                rho: 0.0,
            },
            32,
            32,
        );
        assert_eq!(m, b);
    }

    #[test]
    fn offset_center_cell_and_boundary() {
        let a = ann(0, 10.0, 20.0, 0.0);
        let (off_r, off_a, mask) = offset_targets(&[a], 32, 32, 9).unwrap();
        assert_eq!(off_r.at(10, 20), 0.0);
        assert_eq!(off_a.at(10, 20), 0.0);
        assert_eq!(mask.at(10, 20), 1.0);
        // Cell 4 bins below the center in range carries +1.
        assert_eq!(off_r.at(6, 20), 1.0);
        assert_eq!(mask.at(15, 20), 0.0);
    }

    #[test]
    fn offset_fractional_center_example() {
        let a = ann(0, 10.5, 20.0, 0.0);
        let (off_r, off_a, _) = offset_targets(&[a], 32, 32, 9).unwrap();
        // Ties round to even: the patch centers on cell (10, 20).
        assert_eq!(off_r.at(10, 20), 0.125);
        assert_eq!(off_a.at(10, 20), 0.0);
    }

    #[test]
    fn offset_decode_identity() {
        let a = ann(0, 17.3046875, 9.84375, 0.0); // quantized-like values
        let (off_r, off_a, mask) = offset_targets(&[a], 32, 32, 9).unwrap();
        for r in 0..32usize {
            for c in 0..32usize {
                if mask.at(r, c) == 1.0 {
                    let rec_r = r as f64 + OFFSET_HALF_WIDTH * off_r.at(r, c);
                    let rec_a = c as f64 + OFFSET_HALF_WIDTH * off_a.at(r, c);
                    assert_eq!(rec_r, 17.3046875);
                    assert_eq!(rec_a, 9.84375);
                }
            }
        }
    }

    #[test]
    fn heading_patch_values() {
        for (theta, expect) in [
            (0.0, (0.0, 1.0)),
            (std::f64::consts::PI, (std::f64::consts::PI.sin(), -1.0)),
            (
                std::f64::consts::FRAC_PI_4,
                (
                    std::f64::consts::FRAC_PI_4.sin(),
                    std::f64::consts::FRAC_PI_4.cos(),
                ),
            ),
        ] {
            let a = ann(1, 20.0, 24.0, theta);
            let (s, c, mask) = heading_targets(&[a], 64, 64).unwrap();
            assert_eq!(mask.at(5, 6), 1.0);
            assert!((s.at(5, 6) - expect.0).abs() < 1e-12);
            assert!((c.at(5, 6) - expect.1).abs() < 1e-12);
            // sin^2 + cos^2 = 1 on masked cells
            assert!((s.at(5, 6).powi(2) + c.at(5, 6).powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_collinear_and_two_point() {
        let pts: Vec<(f64, f64, f64)> = (0..5).map(|i| (i as f64, 0.0, i as f64 * 2.0)).collect();
        let headings = heading_from_trajectory(&pts).unwrap();
        for h in headings {
            assert!(h.abs() < 1e-9, "heading {h}");
        }
        let h = heading_from_trajectory(&[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]).unwrap();
        assert!((h[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn trajectory_circle_headings_advance() {
        // Counterclockwise circle in (x, y): position (cos t, sin t).
        let pts: Vec<(f64, f64, f64)> = (0..24)
            .map(|i| {
                let t = i as f64 * 0.2;
                (t, t.cos(), t.sin())
            })
            .collect();
        let headings = heading_from_trajectory(&pts).unwrap();
        // Velocity (-sin t, cos t) -> heading atan2(-sin t, cos t) = -t (mod 2pi):
        // strictly decreasing when unwrapped, and matching the analytic tangent
        // up to the natural-spline boundary ripple.
        let errs: Vec<f64> = headings
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let t = i as f64 * 0.2;
                let expect = (-t.sin()).atan2(t.cos());
                crate::geometry::angular_error(*h, expect)
            })
            .collect();
        // Natural-spline interpolation is O(h^2) when the curve's second
        // derivative is nonzero at the ends; h = 0.2 here.
        let max = errs.iter().cloned().fold(0.0f64, f64::max);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(max < 0.09, "max tangent error {max}");
        assert!(mean < 0.04, "mean tangent error {mean}");
        let mut prev = headings[0];
        for h in &headings[1..] {
            let step = (h - prev + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            assert!(step < 0.0, "heading did not advance monotonically");
            prev = *h;
        }
    }

    #[test]
    fn trajectory_rejects_bad_timestamps() {
        assert!(heading_from_trajectory(&[(0.0, 0.0, 0.0)]).is_err());
        assert!(heading_from_trajectory(&[(0.0, 0.0, 0.0), (0.0, 1.0, 1.0)]).is_err());
    }

    #[test]
    fn quantize_center_avoids_half_ties() {
        let q = quantize_center(10.5);
        assert!(q > 10.5 && (q * 256.0).fract() == 0.0);
        assert_eq!(quantize_center(10.25), 10.25);
        // Mirroring is exact on the quantized grid.
        let v = quantize_center(20.3);
        assert_eq!(63.0 - (63.0 - v), v);
    }
}
