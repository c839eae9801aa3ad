use crate::ops::check_same_shape;
use crate::{debug_check_finite, BackwardOp, Result, Scalar, Tensor};

struct AddBack<S: Scalar> {
    a: Tensor<S>,
    b: Tensor<S>,
}

impl<S: Scalar> BackwardOp<S> for AddBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone(), self.b.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        vec![Some(g.to_vec()), Some(g.to_vec())]
    }
}

struct MulBack<S: Scalar> {
    a: Tensor<S>,
    b: Tensor<S>,
}

impl<S: Scalar> BackwardOp<S> for MulBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone(), self.b.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let da = if self.a.track() {
            Some(g.iter().zip(self.b.data()).map(|(&g, &b)| g * b).collect())
        } else {
            None
        };
        let db = if self.b.track() {
            Some(g.iter().zip(self.a.data()).map(|(&g, &a)| g * a).collect())
        } else {
            None
        };
        vec![da, db]
    }
}

struct ScaleBack<S: Scalar> {
    a: Tensor<S>,
    factor: S,
}

impl<S: Scalar> BackwardOp<S> for ScaleBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        vec![Some(g.iter().map(|&g| g * self.factor).collect())]
    }
}

struct SumBack<S: Scalar> {
    a: Tensor<S>,
    scale: S,
}

impl<S: Scalar> BackwardOp<S> for SumBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        vec![Some(vec![g[0] * self.scale; self.a.numel()])]
    }
}

struct SigmoidBack<S: Scalar> {
    a: Tensor<S>,
    y: Vec<S>,
}

impl<S: Scalar> BackwardOp<S> for SigmoidBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let d = g
            .iter()
            .zip(&self.y)
            .map(|(&g, &y)| g * y * (S::one() - y))
            .collect();
        vec![Some(d)]
    }
}

struct TanhBack<S: Scalar> {
    a: Tensor<S>,
    y: Vec<S>,
}

impl<S: Scalar> BackwardOp<S> for TanhBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let d = g
            .iter()
            .zip(&self.y)
            .map(|(&g, &y)| g * (S::one() - y * y))
            .collect();
        vec![Some(d)]
    }
}

struct ReshapeBack<S: Scalar> {
    a: Tensor<S>,
}

impl<S: Scalar> BackwardOp<S> for ReshapeBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        vec![Some(g.to_vec())]
    }
}

struct TransposeBack<S: Scalar> {
    a: Tensor<S>,
    batch: usize,
    rows: usize,
    cols: usize,
}

impl<S: Scalar> BackwardOp<S> for TransposeBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        // g has shape [batch, cols, rows]; transpose back.
        let mut out = vec![S::zero(); g.len()];
        for n in 0..self.batch {
            let src = &g[n * self.rows * self.cols..(n + 1) * self.rows * self.cols];
            let dst = &mut out[n * self.rows * self.cols..(n + 1) * self.rows * self.cols];
            for c in 0..self.cols {
                for r in 0..self.rows {
                    dst[r * self.cols + c] = src[c * self.rows + r];
                }
            }
        }
        vec![Some(out)]
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        check_same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape(),
            data,
            Box::new(AddBack {
                a: self.clone(),
                b: other.clone(),
            }),
        ))
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        check_same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape(),
            data,
            Box::new(MulBack {
                a: self.clone(),
                b: other.clone(),
            }),
        ))
    }

    pub fn scale(&self, factor: S) -> Tensor<S> {
        let data = self.data().iter().map(|&a| a * factor).collect();
        Tensor::from_op(
            self.shape(),
            data,
            Box::new(ScaleBack {
                a: self.clone(),
                factor,
            }),
        )
    }

    pub fn sum(&self) -> Tensor<S> {
        let mut acc = S::zero();
        for &v in self.data() {
            acc = acc + v;
        }
        Tensor::from_op(
            &[1],
            vec![acc],
            Box::new(SumBack {
                a: self.clone(),
                scale: S::one(),
            }),
        )
    }

    pub fn mean(&self) -> Tensor<S> {
        let n = S::from_f64_lossy(self.numel() as f64);
        let mut acc = S::zero();
        for &v in self.data() {
            acc = acc + v;
        }
        Tensor::from_op(
            &[1],
            vec![acc / n],
            Box::new(SumBack {
                a: self.clone(),
                scale: S::one() / n,
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        let y: Vec<S> = self
            .data()
            .iter()
            .map(|&x| S::one() / (S::one() + (-x).exp()))
            .collect();
        debug_check_finite("sigmoid", &y);
        Tensor::from_op(
            self.shape(),
            y.clone(),
            Box::new(SigmoidBack { a: self.clone(), y }),
        )
    }

    pub fn tanh_act(&self) -> Tensor<S> {
        let y: Vec<S> = self.data().iter().map(|&x| x.tanh()).collect();
        debug_check_finite("tanh", &y);
        Tensor::from_op(
            self.shape(),
            y.clone(),
            Box::new(TanhBack { a: self.clone(), y }),
        )
    }

    /// Same data, new shape (element count must match).
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(crate::TensorError::ShapeDataMismatch {
                shape: shape.to_vec(),
                len: self.numel(),
            });
        }
        Ok(Tensor::from_op(
            shape,
            self.data().to_vec(),
            Box::new(ReshapeBack { a: self.clone() }),
        ))
    }

    /// Swaps the two trailing axes: `[..., M, N] -> [..., N, M]`.
    pub fn transpose_last2(&self) -> Result<Tensor<S>> {
        let nd = self.shape().len();
        if nd < 2 {
            return Err(crate::TensorError::Rank {
                op: "transpose_last2",
                expected: 2,
                shape: self.shape().to_vec(),
            });
        }
        let rows = self.shape()[nd - 2];
        let cols = self.shape()[nd - 1];
        let batch = self.numel() / (rows * cols);
        let mut data = vec![S::zero(); self.numel()];
        for n in 0..batch {
            let src = &self.data()[n * rows * cols..(n + 1) * rows * cols];
            let dst = &mut data[n * rows * cols..(n + 1) * rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape.swap(nd - 2, nd - 1);
        Ok(Tensor::from_op(
            &shape,
            data,
            Box::new(TransposeBack {
                a: self.clone(),
                batch,
                rows,
                cols,
            }),
        ))
    }
}
