use crate::{debug_check_finite, BackwardOp, Result, Scalar, Tensor, TensorError};

/// `c[m,n] += a[m,k] * b[k,n]`, accumulating over `k` in ascending order for
/// every output element (same order as the naive triple loop).
pub(crate) fn matmul_acc<S: Scalar>(
    c: &mut [S],
    a: &[S],
    b: &[S],
    m: usize,
    k: usize,
    n: usize,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + aip * bv;
            }
        }
    }
}

/// `c[m,k] += a[m,n] * b[k,n]^T` via row dot products.
pub(crate) fn matmul_abt_acc<S: Scalar>(
    c: &mut [S],
    a: &[S],
    b: &[S],
    m: usize,
    n: usize,
    k: usize,
) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            c[i * k + j] = c[i * k + j] + acc;
        }
    }
}

/// `c[k,n] += a[m,k]^T * b[m,n]`.
pub(crate) fn matmul_atb_acc<S: Scalar>(
    c: &mut [S],
    a: &[S],
    b: &[S],
    m: usize,
    k: usize,
    n: usize,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + aip * bv;
            }
        }
    }
}

struct BatchedMatmulBack<S: Scalar> {
    a: Tensor<S>,
    b: Tensor<S>,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
}

impl<S: Scalar> BackwardOp<S> for BatchedMatmulBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        vec![self.a.clone(), self.b.clone()]
    }
    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let da = if self.a.track() {
            let mut da = vec![S::zero(); self.a.numel()];
            for c in 0..self.batch {
                matmul_abt_acc(
                    &mut da[c * m * k..(c + 1) * m * k],
                    &g[c * m * n..(c + 1) * m * n],
                    &self.b.data()[c * k * n..(c + 1) * k * n],
                    m,
                    n,
                    k,
                );
            }
            Some(da)
        } else {
            None
        };
        let db = if self.b.track() {
            let mut db = vec![S::zero(); self.b.numel()];
            for c in 0..self.batch {
                matmul_atb_acc(
                    &mut db[c * k * n..(c + 1) * k * n],
                    &self.a.data()[c * m * k..(c + 1) * m * k],
                    &g[c * m * n..(c + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
            Some(db)
        } else {
            None
        };
        vec![da, db]
    }
}

/// Per-channel matrix product: `[C,M,K] x [C,K,N] -> [C,M,N]`.
pub fn batched_matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 3 {
        return Err(TensorError::Rank {
            op: "batched_matmul",
            expected: 3,
            shape: sa.to_vec(),
        });
    }
    if sb.len() != 3 {
        return Err(TensorError::Rank {
            op: "batched_matmul",
            expected: 3,
            shape: sb.to_vec(),
        });
    }
    if sa[0] != sb[0] {
        return Err(TensorError::AxisMismatch {
            op: "batched_matmul",
            axis: "batch",
            expected: sa[0],
            got: sb[0],
        });
    }
    if sa[2] != sb[1] {
        return Err(TensorError::AxisMismatch {
            op: "batched_matmul",
            axis: "inner (K)",
            expected: sa[2],
            got: sb[1],
        });
    }
    let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
    let mut out = vec![S::zero(); batch * m * n];
    for c in 0..batch {
        matmul_acc(
            &mut out[c * m * n..(c + 1) * m * n],
            &a.data()[c * m * k..(c + 1) * m * k],
            &b.data()[c * k * n..(c + 1) * k * n],
            m,
            k,
            n,
        );
    }
    debug_check_finite("batched_matmul", &out);
    Ok(Tensor::from_op(
        &[batch, m, n],
        out,
        Box::new(BatchedMatmulBack {
            a: a.clone(),
            b: b.clone(),
            batch,
            m,
            k,
            n,
        }),
    ))
}
