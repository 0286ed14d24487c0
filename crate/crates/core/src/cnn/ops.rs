//! Layer kernels on `(batch, channel, height, width)` tensors in standard layout.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayViewMut2};

use super::CnnFloat;

/// Batch-norm epsilon added to the variance.
pub const BN_EPS: f64 = 1e-5;

/// Unrolls one `(c, h, w)` image into `(c * 9, h * w)` columns for a 3x3
/// same-padded convolution.
pub(crate) fn im2col<T: CnnFloat>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    debug_assert_eq!(cols.len(), c * 9 * hw);
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image.
pub(crate) fn col2im<T: CnnFloat>(cols: &[T], c: usize, h: usize, w: usize, x: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d = *d + *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d = *d + *s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d = *d + *s),
                    }
                }
            }
        }
    }
}

/// 3x3 same-padded convolution, stride 1. `weight` is `(filters, in_channels * 9)`.
pub fn conv_forward<T: CnnFloat>(x: &Array4<T>, weight: &Array2<T>, bias: &Array1<T>) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    let f = weight.nrows();
    let hw = h * w;
    let mut out = Array4::zeros((n, f, h, w));
    let mut cols = vec![T::zero(); c * 9 * hw];
    let xs = x.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    for s in 0..n {
        im2col(&xs[s * c * hw..(s + 1) * c * hw], c, h, w, &mut cols);
        let cols_v = ArrayView2::from_shape((c * 9, hw), &cols).unwrap();
        let chunk = &mut os[s * f * hw..(s + 1) * f * hw];
        for (fi, row) in chunk.chunks_mut(hw).enumerate() {
            row.fill(bias[fi]);
        }
        let mut o = ArrayViewMut2::from_shape((f, hw), chunk).unwrap();
        general_mat_mul(T::one(), weight, &cols_v, T::one(), &mut o);
    }
    out
}

/// Gradients of [`conv_forward`]. Returns `(d_input, d_weight, d_bias)`; the
/// input gradient is skipped when `need_input` is false.
pub fn conv_backward<T: CnnFloat>(
    x: &Array4<T>,
    weight: &Array2<T>,
    dout: &Array4<T>,
    need_input: bool,
) -> (Option<Array4<T>>, Array2<T>, Array1<T>) {
    let (n, c, h, w) = x.dim();
    let f = weight.nrows();
    let hw = h * w;
    let mut dw = Array2::zeros(weight.dim());
    let mut db = Array1::zeros(f);
    let mut dx = need_input.then(|| Array4::zeros((n, c, h, w)));
    let mut cols = vec![T::zero(); c * 9 * hw];
    let mut dcols = Array2::zeros((c * 9, hw));
    let xs = x.as_slice().expect("standard layout");
    let ds = dout.as_slice().expect("standard layout");
    for s in 0..n {
        im2col(&xs[s * c * hw..(s + 1) * c * hw], c, h, w, &mut cols);
        let cols_v = ArrayView2::from_shape((c * 9, hw), &cols).unwrap();
        let d = ArrayView2::from_shape((f, hw), &ds[s * f * hw..(s + 1) * f * hw]).unwrap();
        general_mat_mul(T::one(), &d, &cols_v.t(), T::one(), &mut dw);
        for (fi, row) in d.outer_iter().enumerate() {
            db[fi] = db[fi] + row.iter().fold(T::zero(), |a, &v| a + v);
        }
        if let Some(dx) = dx.as_mut() {
            general_mat_mul(T::one(), &weight.t(), &d, T::zero(), &mut dcols);
            let dxs = dx.as_slice_mut().unwrap();
            col2im(dcols.as_slice().unwrap(), c, h, w, &mut dxs[s * c * hw..(s + 1) * c * hw]);
        }
    }
    (dx, dw, db)
}

pub fn relu<T: CnnFloat>(x: &Array4<T>) -> Array4<T> {
    x.mapv(|v| v.max(T::zero()))
}

/// Batch statistics of one batch-norm application in train mode.
pub struct BnBatch<T> {
    /// Normalized input before scale and shift.
    pub xhat: Array4<T>,
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

fn channel_stats<T: CnnFloat>(x: &Array4<T>) -> (Vec<f64>, Vec<f64>) {
    let (n, c, h, w) = x.dim();
    let hw = h * w;
    let xs = x.as_slice().unwrap();
    let count = (n * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let mut sum = 0.0;
        for s in 0..n {
            sum += xs[(s * c + ci) * hw..][..hw].iter().map(|v| v.to_f64().unwrap()).sum::<f64>();
        }
        let m = sum / count;
        let mut sq = 0.0;
        for s in 0..n {
            sq += xs[(s * c + ci) * hw..][..hw]
                .iter()
                .map(|v| {
                    let d = v.to_f64().unwrap() - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean[ci] = m;
        var[ci] = sq / count;
    }
    (mean, var)
}

fn normalize<T: CnnFloat>(x: &Array4<T>, mean: &[f64], inv_std: &[f64]) -> Array4<T> {
    let (_, c, h, w) = x.dim();
    let hw = h * w;
    let mut out = x.clone();
    for (i, chunk) in out.as_slice_mut().unwrap().chunks_mut(hw).enumerate() {
        let ci = i % c;
        let m = T::from_f64(mean[ci]).unwrap();
        let s = T::from_f64(inv_std[ci]).unwrap();
        chunk.iter_mut().for_each(|v| *v = (*v - m) * s);
    }
    out
}

fn scale_shift<T: CnnFloat>(xhat: &Array4<T>, gamma: &Array1<T>, beta: &Array1<T>) -> Array4<T> {
    let (_, c, h, w) = xhat.dim();
    let mut out = xhat.clone();
    for (i, chunk) in out.as_slice_mut().unwrap().chunks_mut(h * w).enumerate() {
        let (g, b) = (gamma[i % c], beta[i % c]);
        chunk.iter_mut().for_each(|v| *v = *v * g + b);
    }
    out
}

/// Train-mode batch norm: normalizes with the batch statistics.
pub fn bn_forward_train<T: CnnFloat>(x: &Array4<T>, gamma: &Array1<T>, beta: &Array1<T>) -> (Array4<T>, BnBatch<T>) {
    let (mean, var) = channel_stats(x);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let xhat = normalize(x, &mean, &inv_std);
    let y = scale_shift(&xhat, gamma, beta);
    (y, BnBatch { xhat, mean, var, inv_std })
}

/// Infer-mode batch norm with running statistics.
pub fn bn_forward_infer<T: CnnFloat>(
    x: &Array4<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
    running_mean: &Array1<T>,
    running_var: &Array1<T>,
) -> Array4<T> {
    let mean: Vec<f64> = running_mean.iter().map(|v| v.to_f64().unwrap()).collect();
    let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v.to_f64().unwrap() + BN_EPS).sqrt()).collect();
    scale_shift(&normalize(x, &mean, &inv_std), gamma, beta)
}

/// Train-mode batch-norm gradients: `(d_input, d_gamma, d_beta)`.
pub fn bn_backward<T: CnnFloat>(dy: &Array4<T>, bn: &BnBatch<T>, gamma: &Array1<T>) -> (Array4<T>, Array1<T>, Array1<T>) {
    let (n, c, h, w) = dy.dim();
    let hw = h * w;
    let count = (n * hw) as f64;
    let dys = dy.as_slice().unwrap();
    let xs = bn.xhat.as_slice().unwrap();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (i, (d, x)) in dys.chunks(hw).zip(xs.chunks(hw)).enumerate() {
        let ci = i % c;
        for (dv, xv) in d.iter().zip(x) {
            let dv = dv.to_f64().unwrap();
            dbeta[ci] += dv;
            dgamma[ci] += dv * xv.to_f64().unwrap();
        }
    }
    let mut dx = Array4::zeros((n, c, h, w));
    for (i, ((out, d), x)) in dx.as_slice_mut().unwrap().chunks_mut(hw).zip(dys.chunks(hw)).zip(xs.chunks(hw)).enumerate() {
        let ci = i % c;
        let g = gamma[ci].to_f64().unwrap();
        let k = g * bn.inv_std[ci] / count;
        for ((o, dv), xv) in out.iter_mut().zip(d).zip(x) {
            let v = k * (count * dv.to_f64().unwrap() - dbeta[ci] - xv.to_f64().unwrap() * dgamma[ci]);
            *o = T::from_f64(v).unwrap();
        }
    }
    let cast = |v: Vec<f64>| v.into_iter().map(|x| T::from_f64(x).unwrap()).collect::<Array1<T>>();
    (dx, cast(dgamma), cast(dbeta))
}

/// 2x2 max-pool, stride 2. Returns the pooled tensor and the winning offset
/// (0..4, row-major within the window) of every output cell.
pub fn maxpool_forward<T: CnnFloat>(x: &Array4<T>) -> (Array4<T>, Vec<u8>) {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array4::zeros((n, c, oh, ow));
    let mut arg = vec![0u8; n * c * oh * ow];
    let xs = x.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    for plane in 0..n * c {
        let src = &xs[plane * h * w..(plane + 1) * h * w];
        for y in 0..oh {
            for xo in 0..ow {
                let base = 2 * y * w + 2 * xo;
                let cand = [src[base], src[base + 1], src[base + w], src[base + w + 1]];
                let mut best = 0;
                for k in 1..4 {
                    if cand[k] > cand[best] {
                        best = k;
                    }
                }
                let o = plane * oh * ow + y * ow + xo;
                os[o] = cand[best];
                arg[o] = best as u8;
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward<T: CnnFloat>(dout: &Array4<T>, arg: &[u8], h: usize, w: usize) -> Array4<T> {
    let (n, c, oh, ow) = dout.dim();
    let mut dx = Array4::zeros((n, c, h, w));
    let ds = dout.as_slice().unwrap();
    let dxs = dx.as_slice_mut().unwrap();
    for plane in 0..n * c {
        for y in 0..oh {
            for xo in 0..ow {
                let o = plane * oh * ow + y * ow + xo;
                let k = arg[o] as usize;
                dxs[plane * h * w + (2 * y + k / 2) * w + 2 * xo + k % 2] = ds[o];
            }
        }
    }
    dx
}

/// Row-wise softmax of `(batch, classes)` logits, computed stably.
pub fn softmax<T: CnnFloat>(logits: &Array2<T>) -> Array2<T> {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.iter().fold(T::zero(), |a, &b| a + b);
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean cross-entropy of logits against class indices, via log-sum-exp.
pub fn cross_entropy<T: CnnFloat>(logits: &Array2<T>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.outer_iter().zip(labels) {
        let r: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap()).collect();
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - r[y];
    }
    total / labels.len() as f64
}
