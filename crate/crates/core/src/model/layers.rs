//! Forward and backward kernels: grouped 3x3 convolution (padding 1),
//! batch normalization, ReLU and dense layers.
//!
//! Per-sample work runs on the rayon pool; every cross-sample reduction is
//! summed sequentially in sample order so results do not depend on the
//! number of worker threads.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, ArrayViewMut3, Axis};
use rayon::prelude::*;

use super::config::conv_out;

#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub groups: usize,
    pub stride: usize,
}

impl ConvShape {
    fn per_group(&self) -> (usize, usize) {
        (self.cin / self.groups, self.cout / self.groups)
    }
}

fn im2col(x: ArrayView3<f64>, c0: usize, cg: usize, stride: usize, ho: usize, wo: usize) -> Array2<f64> {
    let (_, h, w) = x.dim();
    let mut col = Array2::zeros((cg * 9, ho * wo));
    for ci in 0..cg {
        let plane = x.index_axis(Axis(0), c0 + ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let mut row = col.row_mut((ci * 3 + ky) * 3 + kx);
                let row = row.as_slice_mut().expect("contiguous");
                for oy in 0..ho {
                    let iy = oy * stride + ky;
                    if iy == 0 || iy > h {
                        continue;
                    }
                    let src = plane.row(iy - 1);
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = ox * stride + kx;
                        if ix >= 1 && ix <= w {
                            *d = src[ix - 1];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im_add(col: &Array2<f64>, mut dx: ArrayViewMut3<f64>, c0: usize, cg: usize, stride: usize, ho: usize, wo: usize) {
    let (_, h, w) = dx.dim();
    for ci in 0..cg {
        let mut plane = dx.index_axis_mut(Axis(0), c0 + ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = col.row((ci * 3 + ky) * 3 + kx);
                for oy in 0..ho {
                    let iy = oy * stride + ky;
                    if iy == 0 || iy > h {
                        continue;
                    }
                    let mut dst = plane.row_mut(iy - 1);
                    for ox in 0..wo {
                        let ix = ox * stride + kx;
                        if ix >= 1 && ix <= w {
                            dst[ix - 1] += row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward(x: &Array4<f64>, weight: &[f64], shape: ConvShape) -> Array4<f64> {
    let (n, cin, h, w) = x.dim();
    debug_assert_eq!(cin, shape.cin);
    let (cg, og) = shape.per_group();
    let (ho, wo) = (conv_out(h, shape.stride), conv_out(w, shape.stride));
    let wmat = ArrayView2::from_shape((shape.cout, cg * 9), weight).expect("weight shape");
    let per_sample: Vec<Array2<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xs = x.index_axis(Axis(0), i);
            let mut y = Array2::zeros((shape.cout, ho * wo));
            for g in 0..shape.groups {
                let col = im2col(xs, g * cg, cg, shape.stride, ho, wo);
                let wg = wmat.slice(s![g * og..(g + 1) * og, ..]);
                let mut yg = y.slice_mut(s![g * og..(g + 1) * og, ..]);
                general_mat_mul(1.0, &wg, &col, 0.0, &mut yg);
            }
            y
        })
        .collect();
    let mut out = Array4::zeros((n, shape.cout, ho, wo));
    for (i, y) in per_sample.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), i)
            .assign(&y.into_shape_with_order((shape.cout, ho, wo)).expect("reshape"));
    }
    out
}

/// Returns the weight gradient and, when `need_dx`, the input gradient.
pub fn conv_backward(
    x: &Array4<f64>,
    weight: &[f64],
    dy: &Array4<f64>,
    shape: ConvShape,
    need_dx: bool,
) -> (Vec<f64>, Option<Array4<f64>>) {
    let (n, _, h, w) = x.dim();
    let (_, _, ho, wo) = dy.dim();
    let (cg, og) = shape.per_group();
    let wmat = ArrayView2::from_shape((shape.cout, cg * 9), weight).expect("weight shape");
    let per_sample: Vec<(Array2<f64>, Option<Array3<f64>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xs = x.index_axis(Axis(0), i);
            let dys = dy.index_axis(Axis(0), i);
            let dys = dys.to_shape((shape.cout, ho * wo)).expect("reshape");
            let mut dw = Array2::zeros((shape.cout, cg * 9));
            let mut dx = need_dx.then(|| Array3::zeros((shape.cin, h, w)));
            for g in 0..shape.groups {
                let col = im2col(xs, g * cg, cg, shape.stride, ho, wo);
                let dyg = dys.slice(s![g * og..(g + 1) * og, ..]);
                let mut dwg = dw.slice_mut(s![g * og..(g + 1) * og, ..]);
                general_mat_mul(1.0, &dyg, &col.t(), 0.0, &mut dwg);
                if let Some(dx) = dx.as_mut() {
                    let wg = wmat.slice(s![g * og..(g + 1) * og, ..]);
                    let dcol = wg.t().dot(&dyg);
                    col2im_add(&dcol, dx.view_mut(), g * cg, cg, shape.stride, ho, wo);
                }
            }
            (dw, dx)
        })
        .collect();
    let mut dw_total = Array2::zeros((shape.cout, cg * 9));
    let mut dx_total = need_dx.then(|| Array4::zeros((n, shape.cin, h, w)));
    for (i, (dw, dx)) in per_sample.into_iter().enumerate() {
        dw_total += &dw;
        if let (Some(total), Some(dx)) = (dx_total.as_mut(), dx) {
            total.index_axis_mut(Axis(0), i).assign(&dx);
        }
    }
    (dw_total.into_raw_vec_and_offset().0, dx_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics.
    Batch,
    /// Normalize with running statistics.
    Running,
}

/// Activations needed by [`bn_backward`].
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mode: BnMode,
}

pub struct BnParams<'a> {
    pub gamma: &'a [f64],
    pub beta: &'a [f64],
    pub running_mean: &'a [f64],
    pub running_var: &'a [f64],
    pub momentum: f64,
    pub eps: f64,
}

/// Batch norm over a `[n][c][spatial]` buffer. In batch mode also returns the
/// updated running mean and (unbiased) variance.
pub fn bn_forward(
    x: &[f64],
    n: usize,
    c: usize,
    sp: usize,
    p: &BnParams,
    mode: BnMode,
) -> (Vec<f64>, BnCache, Option<(Vec<f64>, Vec<f64>)>) {
    let m = (n * sp) as f64;
    let (mean, var, update) = match mode {
        BnMode::Batch => {
            let mut mean = vec![0.0; c];
            for (j, chunk) in x.chunks_exact(sp).enumerate() {
                mean[j % c] += chunk.iter().sum::<f64>();
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut var = vec![0.0; c];
            for (j, chunk) in x.chunks_exact(sp).enumerate() {
                let mu = mean[j % c];
                var[j % c] += chunk.iter().map(|&t| (t - mu) * (t - mu)).sum::<f64>();
            }
            var.iter_mut().for_each(|v| *v /= m);
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            let rm = (0..c).map(|ch| (1.0 - p.momentum) * p.running_mean[ch] + p.momentum * mean[ch]).collect();
            let rv =
                (0..c).map(|ch| (1.0 - p.momentum) * p.running_var[ch] + p.momentum * var[ch] * unbias).collect();
            (mean, var, Some((rm, rv)))
        }
        BnMode::Running => (p.running_mean.to_vec(), p.running_var.to_vec(), None),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for (j, ((xs, hs), ys)) in x.chunks_exact(sp).zip(xhat.chunks_exact_mut(sp)).zip(y.chunks_exact_mut(sp)).enumerate() {
        let ch = j % c;
        let (mu, is, g, b) = (mean[ch], inv_std[ch], p.gamma[ch], p.beta[ch]);
        for ((&xv, h), yv) in xs.iter().zip(hs.iter_mut()).zip(ys.iter_mut()) {
            *h = (xv - mu) * is;
            *yv = g * *h + b;
        }
    }
    debug_assert_eq!(x.len(), n * c * sp);
    (y, BnCache { xhat, inv_std, mode }, update)
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn bn_backward(dy: &[f64], cache: &BnCache, gamma: &[f64], n: usize, c: usize, sp: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = (n * sp) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (j, (ds, hs)) in dy.chunks_exact(sp).zip(cache.xhat.chunks_exact(sp)).enumerate() {
        dgamma[j % c] += ds.iter().zip(hs).map(|(d, h)| d * h).sum::<f64>();
        dbeta[j % c] += ds.iter().sum::<f64>();
    }
    let mut dx = vec![0.0; dy.len()];
    for (j, ((ds, hs), out)) in dy.chunks_exact(sp).zip(cache.xhat.chunks_exact(sp)).zip(dx.chunks_exact_mut(sp)).enumerate() {
        let ch = j % c;
        let scale = gamma[ch] * cache.inv_std[ch];
        match cache.mode {
            BnMode::Batch => {
                let (db, dg) = (dbeta[ch], dgamma[ch]);
                for ((o, &d), &h) in out.iter_mut().zip(ds).zip(hs) {
                    *o = scale / m * (m * d - db - h * dg);
                }
            }
            BnMode::Running => out.iter_mut().zip(ds).for_each(|(o, &d)| *o = scale * d),
        }
    }
    debug_assert_eq!(dy.len(), n * c * sp);
    (dx, dgamma, dbeta)
}

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_inplace(grad: &mut [f64], out: &[f64]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// `x W^T + b` with `W` stored `[out, in]`.
pub fn linear_forward(x: &Array2<f64>, weight: &[f64], bias: &[f64]) -> Array2<f64> {
    let out = bias.len();
    let w = ArrayView2::from_shape((out, x.ncols()), weight).expect("weight shape");
    let mut y = x.dot(&w.t());
    for mut row in y.rows_mut() {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
    y
}

/// Returns `(dW, db, dx)`.
pub fn linear_backward(x: &Array2<f64>, weight: &[f64], dy: &Array2<f64>) -> (Vec<f64>, Vec<f64>, Array2<f64>) {
    let out = dy.ncols();
    let w = ArrayView2::from_shape((out, x.ncols()), weight).expect("weight shape");
    let dw = dy.t().dot(x);
    let db = dy.sum_axis(Axis(0));
    let dx = dy.dot(&w);
    (dw.into_raw_vec_and_offset().0, db.into_raw_vec_and_offset().0, dx)
}
