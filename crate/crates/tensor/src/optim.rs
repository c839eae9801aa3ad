//! Adam with bias correction.

use crate::{Result, Scalar, Tensor, TensorError};

pub struct Adam<S: Scalar> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: S) -> Self {
        Adam {
            lr,
            beta1: S::from_f64_lossy(0.9),
            beta2: S::from_f64_lossy(0.999),
            eps: S::from_f64_lossy(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over `params`, consuming the gradients stored on them by
    /// the last backward pass. Each parameter is replaced by a fresh leaf
    /// with cleared gradient; a parameter without a gradient is left as-is
    /// (its moments still decay).
    pub fn step(&mut self, params: &mut [Tensor<S>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
            self.v = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(TensorError::ParamCountMismatch {
                expected: self.m.len(),
                got: params.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = S::one() - self.beta1.powi(t);
        let bc2 = S::one() - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            if self.m[i].len() != p.numel() {
                return Err(TensorError::Invalid {
                    op: "adam_step",
                    msg: format!(
                        "moment {i} holds {} values but parameter has {}",
                        self.m[i].len(),
                        p.numel()
                    ),
                });
            }
            let Some(grad) = p.grad() else { continue };
            let mut data = p.data().to_vec();
            for (j, g) in grad.iter().enumerate() {
                let m = self.beta1 * self.m[i][j] + (S::one() - self.beta1) * *g;
                let v = self.beta2 * self.v[i][j] + (S::one() - self.beta2) * *g * *g;
                self.m[i][j] = m;
                self.v[i][j] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                data[j] = data[j] - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            *p = Tensor::leaf(p.shape(), data, true)?;
        }
        Ok(())
    }
}
