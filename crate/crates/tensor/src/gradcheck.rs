//! Central finite-difference verification of reverse-mode gradients.

use crate::{backward, Result, Scalar, Tensor};

/// Compares the analytic gradient of `f` at `x` against central differences
/// with step `h`, coordinate by coordinate (all of them, or a caller-chosen
/// subset). Returns the maximum relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<S, F>(f: F, x: &Tensor<S>, h: S) -> Result<S>
where
    S: Scalar,
    F: Fn(&Tensor<S>) -> Result<Tensor<S>>,
{
    grad_check_coords(f, x, h, None)
}

pub fn grad_check_coords<S, F>(f: F, x: &Tensor<S>, h: S, coords: Option<&[usize]>) -> Result<S>
where
    S: Scalar,
    F: Fn(&Tensor<S>) -> Result<Tensor<S>>,
{
    let probe = Tensor::leaf(x.shape(), x.data().to_vec(), true)?;
    let loss = f(&probe)?;
    backward(&loss)?;
    let analytic = probe.grad().unwrap_or_else(|| vec![S::zero(); x.numel()]);

    let floor = S::from_f64_lossy(1e-8);
    let two = S::from_f64_lossy(2.0);
    let mut worst = S::zero();
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.numel()).collect();
            &all
        }
    };
    for &i in coords {
        let mut plus = x.data().to_vec();
        plus[i] = plus[i] + h;
        let mut minus = x.data().to_vec();
        minus[i] = minus[i] - h;
        let fp = f(&Tensor::new(x.shape(), plus)?)?.item()?;
        let fm = f(&Tensor::new(x.shape(), minus)?)?.item()?;
        let numeric = (fp - fm) / (two * h);
        let denom = floor.max(analytic[i].abs() + numeric.abs());
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}
