use crate::{debug_check_finite, BackwardOp, Result, Scalar, Tensor, TensorError};

struct SoftmaxBack<S: Scalar> {
    a: Tensor<S>,
    y: Vec<S>,
    row: usize,
}

impl<S: Scalar> BackwardOp<S> for SoftmaxBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let mut dx = vec![S::zero(); g.len()];
        for r in 0..g.len() / self.row {
            let (lo, hi) = (r * self.row, (r + 1) * self.row);
            let y = &self.y[lo..hi];
            let gr = &g[lo..hi];
            let mut dot = S::zero();
            for (&yv, &gv) in y.iter().zip(gr) {
                dot = dot + yv * gv;
            }
            for ((d, &yv), &gv) in dx[lo..hi].iter_mut().zip(y).zip(gr) {
                *d = yv * (gv - dot);
            }
        }
        vec![Some(dx)]
    }
}

/// Softmax over the trailing axis with max-subtraction for stability.
pub fn softmax_lastdim<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let Some(&row) = x.shape().last() else {
        return Err(TensorError::Rank {
            op: "softmax_lastdim",
            expected: 1,
            shape: x.shape().to_vec(),
        });
    };
    let mut y = vec![S::zero(); x.numel()];
    for (src, dst) in x.data().chunks_exact(row).zip(y.chunks_exact_mut(row)) {
        let mut m = src[0];
        for &v in src {
            if v > m {
                m = v;
            }
        }
        let mut sum = S::zero();
        for (&v, d) in src.iter().zip(dst.iter_mut()) {
            *d = (v - m).exp();
            sum = sum + *d;
        }
        for d in dst.iter_mut() {
            *d = *d / sum;
        }
    }
    debug_check_finite("softmax_lastdim", &y);
    Ok(Tensor::from_op(
        x.shape(),
        y.clone(),
        Box::new(SoftmaxBack {
            a: x.clone(),
            y,
            row,
        }),
    ))
}

struct LayerNormBack<S: Scalar> {
    x: Tensor<S>,
    gamma: Tensor<S>,
    beta: Tensor<S>,
    xhat: Vec<S>,
    invstd: Vec<S>,
    channels: usize,
    plane: usize,
}

impl<S: Scalar> BackwardOp<S> for LayerNormBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.x.clone(), self.gamma.clone(), self.beta.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let (c, plane) = (self.channels, self.plane);
        let csz = S::from_f64_lossy(c as f64);
        let batches = g.len() / (c * plane);

        let mut dx = if self.x.track() {
            Some(vec![S::zero(); g.len()])
        } else {
            None
        };
        let mut dgamma = vec![S::zero(); c];
        let mut dbeta = vec![S::zero(); c];
        for n in 0..batches {
            let base = n * c * plane;
            for s in 0..plane {
                let loc = n * plane + s;
                let mut gh_mean = S::zero();
                let mut ghx_mean = S::zero();
                for ch in 0..c {
                    let i = base + ch * plane + s;
                    let gh = g[i] * self.gamma.data()[ch];
                    gh_mean = gh_mean + gh;
                    ghx_mean = ghx_mean + gh * self.xhat[i];
                    dgamma[ch] = dgamma[ch] + g[i] * self.xhat[i];
                    dbeta[ch] = dbeta[ch] + g[i];
                }
                gh_mean = gh_mean / csz;
                ghx_mean = ghx_mean / csz;
                if let Some(dx) = dx.as_mut() {
                    let istd = self.invstd[loc];
                    for ch in 0..c {
                        let i = base + ch * plane + s;
                        let gh = g[i] * self.gamma.data()[ch];
                        dx[i] = istd * (gh - gh_mean - self.xhat[i] * ghx_mean);
                    }
                }
            }
        }
        vec![
            dx,
            self.gamma.track().then_some(dgamma),
            self.beta.track().then_some(dbeta),
        ]
    }
}

/// Normalizes over the channel axis at every `(n, h, w)` location, then
/// applies the per-channel affine `gamma`/`beta`.
pub fn layernorm_channels<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    eps: S,
) -> Result<Tensor<S>> {
    let xs = x.shape();
    if xs.len() != 4 {
        return Err(TensorError::Rank {
            op: "layernorm_channels",
            expected: 4,
            shape: xs.to_vec(),
        });
    }
    let (n, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
    if gamma.numel() != c || beta.numel() != c {
        return Err(TensorError::AxisMismatch {
            op: "layernorm_channels",
            axis: "channels",
            expected: c,
            got: gamma.numel().min(beta.numel()),
        });
    }
    let csz = S::from_f64_lossy(c as f64);
    let mut out = vec![S::zero(); x.numel()];
    let mut xhat = vec![S::zero(); x.numel()];
    let mut invstd = vec![S::zero(); n * plane];
    for b in 0..n {
        let base = b * c * plane;
        for s in 0..plane {
            let mut mean = S::zero();
            for ch in 0..c {
                mean = mean + x.data()[base + ch * plane + s];
            }
            mean = mean / csz;
            let mut var = S::zero();
            for ch in 0..c {
                let d = x.data()[base + ch * plane + s] - mean;
                var = var + d * d;
            }
            var = var / csz;
            let istd = S::one() / (var + eps).sqrt();
            invstd[b * plane + s] = istd;
            for ch in 0..c {
                let i = base + ch * plane + s;
                let h = (x.data()[i] - mean) * istd;
                xhat[i] = h;
                out[i] = gamma.data()[ch] * h + beta.data()[ch];
            }
        }
    }
    debug_check_finite("layernorm_channels", &out);
    Ok(Tensor::from_op(
        xs,
        out,
        Box::new(LayerNormBack {
            x: x.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            xhat,
            invstd,
            channels: c,
            plane,
        }),
    ))
}

/// Running statistics for [`batchnorm2d`].
#[derive(Debug, Clone)]
pub struct BatchNormState<S: Scalar> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

impl<S: Scalar> BatchNormState<S> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            mean: vec![S::zero(); channels],
            var: vec![S::one(); channels],
        }
    }
}

struct BatchNormBack<S: Scalar> {
    x: Tensor<S>,
    gamma: Tensor<S>,
    beta: Tensor<S>,
    xhat: Vec<S>,
    invstd: Vec<S>,
    training: bool,
    channels: usize,
    plane: usize,
}

impl<S: Scalar> BackwardOp<S> for BatchNormBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.x.clone(), self.gamma.clone(), self.beta.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let (c, plane) = (self.channels, self.plane);
        let n = g.len() / (c * plane);
        let m = S::from_f64_lossy((n * plane) as f64);

        let mut dx = if self.x.track() {
            Some(vec![S::zero(); g.len()])
        } else {
            None
        };
        let mut dgamma = vec![S::zero(); c];
        let mut dbeta = vec![S::zero(); c];
        for ch in 0..c {
            let mut gsum = S::zero();
            let mut gxsum = S::zero();
            for b in 0..n {
                let base = (b * c + ch) * plane;
                for s in 0..plane {
                    gsum = gsum + g[base + s];
                    gxsum = gxsum + g[base + s] * self.xhat[base + s];
                }
            }
            dgamma[ch] = gxsum;
            dbeta[ch] = gsum;
            if let Some(dx) = dx.as_mut() {
                let gm = self.gamma.data()[ch];
                let istd = self.invstd[ch];
                if self.training {
                    let gmean = gsum / m;
                    let gxmean = gxsum / m;
                    for b in 0..n {
                        let base = (b * c + ch) * plane;
                        for s in 0..plane {
                            let i = base + s;
                            dx[i] = gm * istd * (g[i] - gmean - self.xhat[i] * gxmean);
                        }
                    }
                } else {
                    for b in 0..n {
                        let base = (b * c + ch) * plane;
                        for s in 0..plane {
                            dx[base + s] = gm * istd * g[base + s];
                        }
                    }
                }
            }
        }
        vec![
            dx,
            self.gamma.track().then_some(dgamma),
            self.beta.track().then_some(dbeta),
        ]
    }
}

/// Batch normalization over `N,H,W` per channel. Training mode normalizes
/// with batch statistics and folds them into `state` with `momentum`; eval
/// mode reads `state`.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    state: &mut BatchNormState<S>,
    training: bool,
    momentum: S,
    eps: S,
) -> Result<Tensor<S>> {
    let xs = x.shape();
    if xs.len() != 4 {
        return Err(TensorError::Rank {
            op: "batchnorm2d",
            expected: 4,
            shape: xs.to_vec(),
        });
    }
    let (n, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
    if gamma.numel() != c || beta.numel() != c || state.mean.len() != c {
        return Err(TensorError::AxisMismatch {
            op: "batchnorm2d",
            axis: "channels",
            expected: c,
            got: gamma.numel(),
        });
    }
    let m = n * plane;
    if training && m < 2 {
        return Err(TensorError::BatchTooSmall { got: m });
    }
    let msz = S::from_f64_lossy(m as f64);

    let mut xhat = vec![S::zero(); x.numel()];
    let mut invstd = vec![S::zero(); c];
    let mut out = vec![S::zero(); x.numel()];
    for ch in 0..c {
        let (mu, var) = if training {
            let mut mu = S::zero();
            for b in 0..n {
                let base = (b * c + ch) * plane;
                for s in 0..plane {
                    mu = mu + x.data()[base + s];
                }
            }
            mu = mu / msz;
            let mut var = S::zero();
            for b in 0..n {
                let base = (b * c + ch) * plane;
                for s in 0..plane {
                    let d = x.data()[base + s] - mu;
                    var = var + d * d;
                }
            }
            var = var / msz;
            // Running update uses the unbiased estimate.
            let unbiased = var * msz / S::from_f64_lossy((m - 1) as f64);
            state.mean[ch] = (S::one() - momentum) * state.mean[ch] + momentum * mu;
            state.var[ch] = (S::one() - momentum) * state.var[ch] + momentum * unbiased;
            (mu, var)
        } else {
            (state.mean[ch], state.var[ch])
        };
        let istd = S::one() / (var + eps).sqrt();
        invstd[ch] = istd;
        let (gm, bt) = (gamma.data()[ch], beta.data()[ch]);
        for b in 0..n {
            let base = (b * c + ch) * plane;
            for s in 0..plane {
                let h = (x.data()[base + s] - mu) * istd;
                xhat[base + s] = h;
                out[base + s] = gm * h + bt;
            }
        }
    }
    debug_check_finite("batchnorm2d", &out);
    Ok(Tensor::from_op(
        xs,
        out,
        Box::new(BatchNormBack {
            x: x.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            xhat,
            invstd,
            training,
            channels: c,
            plane,
        }),
    ))
}
