use crate::{BackwardOp, Result, Scalar, Tensor, TensorError};

struct PreluBack<S: Scalar> {
    x: Tensor<S>,
    alpha: Tensor<S>,
    channels: usize,
    plane: usize,
}

impl<S: Scalar> BackwardOp<S> for PreluBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.x.clone(), self.alpha.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let (c, plane) = (self.channels, self.plane);
        let n = g.len() / (c * plane);
        let mut dx = if self.x.track() {
            Some(vec![S::zero(); g.len()])
        } else {
            None
        };
        let mut dalpha = vec![S::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                let a = self.alpha.data()[ch];
                for s in 0..plane {
                    let i = base + s;
                    let xv = self.x.data()[i];
                    if xv > S::zero() {
                        if let Some(dx) = dx.as_mut() {
                            dx[i] = g[i];
                        }
                    } else {
                        if let Some(dx) = dx.as_mut() {
                            dx[i] = g[i] * a;
                        }
                        dalpha[ch] = dalpha[ch] + g[i] * xv;
                    }
                }
            }
        }
        vec![dx, self.alpha.track().then_some(dalpha)]
    }
}

/// PReLU with one learnable slope per channel: `x if x > 0 else alpha * x`.
pub fn prelu<S: Scalar>(x: &Tensor<S>, alpha: &Tensor<S>) -> Result<Tensor<S>> {
    let xs = x.shape();
    if xs.len() != 4 {
        return Err(TensorError::Rank {
            op: "prelu",
            expected: 4,
            shape: xs.to_vec(),
        });
    }
    let (c, plane) = (xs[1], xs[2] * xs[3]);
    if alpha.numel() != c {
        return Err(TensorError::AxisMismatch {
            op: "prelu",
            axis: "channels",
            expected: c,
            got: alpha.numel(),
        });
    }
    let n = xs[0];
    let mut out = vec![S::zero(); x.numel()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            let a = alpha.data()[ch];
            for s in 0..plane {
                let xv = x.data()[base + s];
                out[base + s] = if xv > S::zero() { xv } else { a * xv };
            }
        }
    }
    Ok(Tensor::from_op(
        xs,
        out,
        Box::new(PreluBack {
            x: x.clone(),
            alpha: alpha.clone(),
            channels: c,
            plane,
        }),
    ))
}
