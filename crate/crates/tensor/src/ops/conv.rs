//! 2-D convolution and its transpose, both built on one im2col engine.
//!
//! The transpose op's forward pass is literally the convolution's
//! input-gradient routine (and vice versa), which makes the two exact
//! adjoints of each other by construction.

use crate::ops::matmul::{matmul_abt_acc, matmul_acc, matmul_atb_acc};
use crate::{debug_check_finite, BackwardOp, Result, Scalar, Tensor, TensorError};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

fn out_extent(op: &'static str, inp: usize, k: usize, s: usize, p: usize) -> Result<usize> {
    let padded = inp + 2 * p;
    if padded < k {
        return Err(TensorError::Invalid {
            op,
            msg: format!("kernel {k} larger than padded input extent {padded}"),
        });
    }
    Ok((padded - k) / s + 1)
}

/// Gathers sliding-window patches: `cols[k][p]` with `k` over
/// `(cin, ky, kx)` and `p` over output positions, zero-filled at padding.
fn im2col<S: Scalar>(x: &[S], g: &ConvGeom, cols: &mut [S]) {
    debug_assert_eq!(cols.len(), g.patch() * g.positions());
    let pos = g.positions();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let k = (c * g.kh + ky) * g.kw + kx;
                let row = &mut cols[k * pos..(k + 1) * pos];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        row[oy * g.ow..(oy + 1) * g.ow].fill(S::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        row[oy * g.ow + ox] = if ix < 0 || ix >= g.w as isize {
                            S::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch gradients back onto the input plane (adjoint of
/// [`im2col`]); fixed loop order keeps accumulation deterministic.
fn col2im_add<S: Scalar>(cols: &[S], g: &ConvGeom, x: &mut [S]) {
    debug_assert_eq!(x.len(), g.cin * g.h * g.w);
    let pos = g.positions();
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let k = (c * g.kh + ky) * g.kw + kx;
                let row = &cols[k * pos..(k + 1) * pos];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + row[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution forward on one sample: `out[co][p] = sum_k w[co][k] cols[k][p]`.
fn conv_fwd_sample<S: Scalar>(
    x: &[S],
    w: &[S],
    geom: &ConvGeom,
    cout: usize,
    cols: &mut [S],
    out: &mut [S],
) {
    im2col(x, geom, cols);
    matmul_acc(out, w, cols, cout, geom.patch(), geom.positions());
}

/// Input gradient on one sample: `col2im(w^T * g)`.
fn conv_bwd_input_sample<S: Scalar>(
    gout: &[S],
    w: &[S],
    geom: &ConvGeom,
    cout: usize,
    cols: &mut [S],
    dx: &mut [S],
) {
    cols.fill(S::zero());
    matmul_atb_acc(cols, w, gout, cout, geom.patch(), geom.positions());
    col2im_add(cols, geom, dx);
}

struct Conv2dBack<S: Scalar> {
    x: Tensor<S>,
    w: Tensor<S>,
    b: Option<Tensor<S>>,
    geom: ConvGeom,
    cout: usize,
}

impl<S: Scalar> BackwardOp<S> for Conv2dBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        let mut p = vec![self.x.clone(), self.w.clone()];
        if let Some(b) = &self.b {
            p.push(b.clone());
        }
        p
    }

    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let geom = &self.geom;
        let n = self.x.numel() / (geom.cin * geom.h * geom.w);
        let in_sz = geom.cin * geom.h * geom.w;
        let out_sz = self.cout * geom.positions();
        let mut cols = vec![S::zero(); geom.patch() * geom.positions()];

        let mut dx = if self.x.track() {
            Some(vec![S::zero(); self.x.numel()])
        } else {
            None
        };
        let mut dw = if self.w.track() {
            Some(vec![S::zero(); self.w.numel()])
        } else {
            None
        };
        for i in 0..n {
            let gi = &g[i * out_sz..(i + 1) * out_sz];
            if let Some(dw) = dw.as_mut() {
                im2col(&self.x.data()[i * in_sz..(i + 1) * in_sz], geom, &mut cols);
                matmul_abt_acc(dw, gi, &cols, self.cout, geom.positions(), geom.patch());
            }
            if let Some(dx) = dx.as_mut() {
                conv_bwd_input_sample(
                    gi,
                    self.w.data(),
                    geom,
                    self.cout,
                    &mut cols,
                    &mut dx[i * in_sz..(i + 1) * in_sz],
                );
            }
        }
        let db = match &self.b {
            Some(b) if b.track() => {
                let mut db = vec![S::zero(); self.cout];
                let pos = geom.positions();
                for i in 0..n {
                    for co in 0..self.cout {
                        let row = &g[(i * self.cout + co) * pos..(i * self.cout + co + 1) * pos];
                        let mut acc = S::zero();
                        for &v in row {
                            acc = acc + v;
                        }
                        db[co] = db[co] + acc;
                    }
                }
                Some(db)
            }
            _ => None,
        };

        let mut grads = vec![dx, dw];
        if self.b.is_some() {
            grads.push(db);
        }
        grads
    }
}

/// Cross-correlation of `x: [N,Cin,H,W]` with `w: [Cout,Cin,kh,kw]`.
pub fn conv2d<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: Option<&Tensor<S>>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor<S>> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 {
        return Err(TensorError::Rank {
            op: "conv2d",
            expected: 4,
            shape: xs.to_vec(),
        });
    }
    if ws.len() != 4 {
        return Err(TensorError::Rank {
            op: "conv2d",
            expected: 4,
            shape: ws.to_vec(),
        });
    }
    if xs[1] != ws[1] {
        return Err(TensorError::AxisMismatch {
            op: "conv2d",
            axis: "input channels",
            expected: ws[1],
            got: xs[1],
        });
    }
    let (kh, kw) = (ws[2], ws[3]);
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(TensorError::Invalid {
            op: "conv2d",
            msg: format!("kernel must be odd, got {kh}x{kw}"),
        });
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(TensorError::Invalid {
            op: "conv2d",
            msg: "stride must be positive".into(),
        });
    }
    if let Some(b) = b {
        if b.numel() != ws[0] {
            return Err(TensorError::AxisMismatch {
                op: "conv2d",
                axis: "bias channels",
                expected: ws[0],
                got: b.numel(),
            });
        }
    }
    let oh = out_extent("conv2d", xs[2], kh, stride.0, padding.0)?;
    let ow = out_extent("conv2d", xs[3], kw, stride.1, padding.1)?;
    let geom = ConvGeom {
        cin: xs[1],
        h: xs[2],
        w: xs[3],
        kh,
        kw,
        sh: stride.0,
        sw: stride.1,
        ph: padding.0,
        pw: padding.1,
        oh,
        ow,
    };
    let (n, cout) = (xs[0], ws[0]);
    let in_sz = geom.cin * geom.h * geom.w;
    let out_sz = cout * geom.positions();
    let mut out = vec![S::zero(); n * out_sz];
    let mut cols = vec![S::zero(); geom.patch() * geom.positions()];
    for i in 0..n {
        conv_fwd_sample(
            &x.data()[i * in_sz..(i + 1) * in_sz],
            w.data(),
            &geom,
            cout,
            &mut cols,
            &mut out[i * out_sz..(i + 1) * out_sz],
        );
        if let Some(b) = b {
            let pos = geom.positions();
            for co in 0..cout {
                let bias = b.data()[co];
                for v in &mut out[i * out_sz + co * pos..i * out_sz + (co + 1) * pos] {
                    *v = *v + bias;
                }
            }
        }
    }
    debug_check_finite("conv2d", &out);
    Ok(Tensor::from_op(
        &[n, cout, oh, ow],
        out,
        Box::new(Conv2dBack {
            x: x.clone(),
            w: w.clone(),
            b: b.cloned(),
            geom,
            cout,
        }),
    ))
}

struct ConvTranspose2dBack<S: Scalar> {
    x: Tensor<S>,
    w: Tensor<S>,
    b: Option<Tensor<S>>,
    /// Geometry of the *forward convolution* this op is the adjoint of:
    /// conv maps `[c2, oh_full, ow_full]` down to `[c1, h_in, w_in]`.
    geom: ConvGeom,
    c1: usize,
    c2: usize,
}

impl<S: Scalar> BackwardOp<S> for ConvTranspose2dBack<S> {
    fn parents(&self) -> Vec<Tensor<S>> {
        let mut p = vec![self.x.clone(), self.w.clone()];
        if let Some(b) = &self.b {
            p.push(b.clone());
        }
        p
    }

    fn backward(&self, g: &[S]) -> Vec<Option<Vec<S>>> {
        let geom = &self.geom;
        let n = self.x.numel() / (self.c1 * geom.positions());
        let in_sz = self.c1 * geom.positions();
        let out_sz = self.c2 * geom.h * geom.w;
        let mut cols = vec![S::zero(); geom.patch() * geom.positions()];

        // d/dx: a plain convolution of the output gradient.
        let mut dx = if self.x.track() {
            Some(vec![S::zero(); self.x.numel()])
        } else {
            None
        };
        let mut dw = if self.w.track() {
            Some(vec![S::zero(); self.w.numel()])
        } else {
            None
        };
        for i in 0..n {
            let gi = &g[i * out_sz..(i + 1) * out_sz];
            if dx.is_some() || dw.is_some() {
                im2col(gi, geom, &mut cols);
            }
            if let Some(dx) = dx.as_mut() {
                matmul_acc(
                    &mut dx[i * in_sz..(i + 1) * in_sz],
                    self.w.data(),
                    &cols,
                    self.c1,
                    geom.patch(),
                    geom.positions(),
                );
            }
            if let Some(dw) = dw.as_mut() {
                matmul_abt_acc(
                    dw,
                    &self.x.data()[i * in_sz..(i + 1) * in_sz],
                    &cols,
                    self.c1,
                    geom.positions(),
                    geom.patch(),
                );
            }
        }
        let db = match &self.b {
            Some(b) if b.track() => {
                let mut db = vec![S::zero(); self.c2];
                let plane = geom.h * geom.w;
                for i in 0..n {
                    for c in 0..self.c2 {
                        let row = &g[(i * self.c2 + c) * plane..(i * self.c2 + c + 1) * plane];
                        let mut acc = S::zero();
                        for &v in row {
                            acc = acc + v;
                        }
                        db[c] = db[c] + acc;
                    }
                }
                Some(db)
            }
            _ => None,
        };

        let mut grads = vec![dx, dw];
        if self.b.is_some() {
            grads.push(db);
        }
        grads
    }
}

/// Transposed convolution of `x: [N,C1,H,W]` with `w: [C1,C2,kh,kw]`;
/// output spatial extent is `stride*(H-1) + kh - 2*padding`. Exact adjoint
/// of [`conv2d`] with the same weight and configuration.
pub fn conv_transpose2d<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: Option<&Tensor<S>>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor<S>> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 {
        return Err(TensorError::Rank {
            op: "conv_transpose2d",
            expected: 4,
            shape: xs.to_vec(),
        });
    }
    if ws.len() != 4 {
        return Err(TensorError::Rank {
            op: "conv_transpose2d",
            expected: 4,
            shape: ws.to_vec(),
        });
    }
    if xs[1] != ws[0] {
        return Err(TensorError::AxisMismatch {
            op: "conv_transpose2d",
            axis: "input channels",
            expected: ws[0],
            got: xs[1],
        });
    }
    if !matches!(stride.0, 1 | 2) || !matches!(stride.1, 1 | 2) {
        return Err(TensorError::Invalid {
            op: "conv_transpose2d",
            msg: format!("stride must be 1 or 2, got {stride:?}"),
        });
    }
    let (c1, c2, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let (hin, win) = (xs[2], xs[3]);
    let oh = (stride.0 * (hin - 1) + kh).checked_sub(2 * padding.0);
    let ow = (stride.1 * (win - 1) + kw).checked_sub(2 * padding.1);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(TensorError::Invalid {
            op: "conv_transpose2d",
            msg: "padding exceeds output extent".into(),
        });
    };
    if oh == 0 || ow == 0 {
        return Err(TensorError::Invalid {
            op: "conv_transpose2d",
            msg: "empty output".into(),
        });
    }
    if let Some(b) = b {
        if b.numel() != c2 {
            return Err(TensorError::AxisMismatch {
                op: "conv_transpose2d",
                axis: "bias channels",
                expected: c2,
                got: b.numel(),
            });
        }
    }
    // Geometry of the conv this is adjoint to: [c2, oh, ow] -> [c1, hin, win].
    let geom = ConvGeom {
        cin: c2,
        h: oh,
        w: ow,
        kh,
        kw,
        sh: stride.0,
        sw: stride.1,
        ph: padding.0,
        pw: padding.1,
        oh: hin,
        ow: win,
    };
    debug_assert_eq!(out_extent("conv_transpose2d", oh, kh, stride.0, padding.0)?, hin);

    let n = xs[0];
    let in_sz = c1 * hin * win;
    let out_sz = c2 * oh * ow;
    let mut out = vec![S::zero(); n * out_sz];
    let mut cols = vec![S::zero(); geom.patch() * geom.positions()];
    for i in 0..n {
        conv_bwd_input_sample(
            &x.data()[i * in_sz..(i + 1) * in_sz],
            w.data(),
            &geom,
            c1,
            &mut cols,
            &mut out[i * out_sz..(i + 1) * out_sz],
        );
        if let Some(b) = b {
            let plane = oh * ow;
            for c in 0..c2 {
                let bias = b.data()[c];
                for v in &mut out[i * out_sz + c * plane..i * out_sz + (c + 1) * plane] {
                    *v = *v + bias;
                }
            }
        }
    }
    debug_check_finite("conv_transpose2d", &out);
    Ok(Tensor::from_op(
        &[n, c2, oh, ow],
        out,
        Box::new(ConvTranspose2dBack {
            x: x.clone(),
            w: w.clone(),
            b: b.cloned(),
            geom,
            c1,
            c2,
        }),
    ))
}
