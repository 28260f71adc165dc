//! Layer kernels. Every function is pure: caches are returned to the caller
//! rather than stored, so one set of weights can serve concurrent callers.
//!
//! Work is split across rayon tasks by output plane. Each output element is
//! produced by exactly one task with a fixed summation order, so results are
//! bit-identical for any thread count.

use rayon::prelude::*;

use super::tensor::{Param, Real, Tensor4};
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;
pub const POOL_WINDOW: usize = 3;
pub const POOL_STRIDE: usize = 2;
pub const BN_EPS: f64 = 1e-5;
/// Fraction of the old running statistic kept at each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Rows (or columns) of the output that a kernel tap at offset `k` touches
/// under same-padding, as a half-open range.
#[inline]
fn tap_range(k: usize, len: usize) -> (usize, usize) {
    let lo = usize::from(k == 0);
    let hi = if k == KERNEL - 1 { len.saturating_sub(1) } else { len };
    (lo, hi.max(lo))
}

fn check_conv_shapes<T: Real>(x: &Tensor4<T>, w: &Param<T>, b: &Param<T>) -> Result<usize> {
    let c = x.channels();
    if w.dims.len() != 4 || w.dims[1] != c || w.dims[2] != KERNEL || w.dims[3] != KERNEL {
        return Err(Error::Shape(format!(
            "conv weights {:?} do not fit input with {c} channels",
            w.dims
        )));
    }
    let o = w.dims[0];
    if b.dims != [o] {
        return Err(Error::Shape(format!("conv bias {:?}, expected [{o}]", b.dims)));
    }
    Ok(o)
}

/// 3x3, stride 1, same-padding cross-correlation.
pub fn conv2d_forward<T: Real>(x: &Tensor4<T>, w: &Param<T>, b: &Param<T>) -> Result<Tensor4<T>> {
    let o = check_conv_shapes(x, w, b)?;
    let [n, c, h, wd] = x.dims;
    let mut out = Tensor4::zeros([n, o, h, wd]);
    out.data
        .par_chunks_mut(h * wd)
        .enumerate()
        .for_each(|(idx, plane)| {
            let (ni, oi) = (idx / o, idx % o);
            plane.fill(b.data[oi]);
            for ci in 0..c {
                let inp = x.plane(ni, ci);
                let k = &w.data[(oi * c + ci) * 9..(oi * c + ci + 1) * 9];
                for ky in 0..KERNEL {
                    let (y_lo, y_hi) = tap_range(ky, h);
                    for kx in 0..KERNEL {
                        let wv = k[ky * KERNEL + kx];
                        let (x_lo, x_hi) = tap_range(kx, wd);
                        for y in y_lo..y_hi {
                            let sy = y + ky - 1;
                            let orow = &mut plane[y * wd + x_lo..y * wd + x_hi];
                            let irow = &inp[sy * wd + x_lo + kx - 1..sy * wd + x_hi + kx - 1];
                            for (ov, &iv) in orow.iter_mut().zip(irow) {
                                *ov += wv * iv;
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub struct ConvGrads<T> {
    pub grad_x: Tensor4<T>,
    pub grad_w: Param<T>,
    pub grad_b: Param<T>,
}

pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor4<T>,
    x: &Tensor4<T>,
    w: &Param<T>,
) -> Result<ConvGrads<T>> {
    let (grad_w, grad_b) = conv2d_backward_params(grad_out, x, w)?;
    let grad_x = conv2d_backward_input(grad_out, w, x.dims)?;
    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}

fn check_grad_out<T: Real>(grad_out: &Tensor4<T>, w: &Param<T>, input_dims: [usize; 4]) -> Result<()> {
    let [n, _, h, wd] = input_dims;
    let o = w.dims[0];
    if grad_out.dims != [n, o, h, wd] {
        return Err(Error::Shape(format!(
            "conv output gradient {:?}, expected {:?}",
            grad_out.dims,
            [n, o, h, wd]
        )));
    }
    Ok(())
}

/// Weight and bias gradients only.
pub fn conv2d_backward_params<T: Real>(
    grad_out: &Tensor4<T>,
    x: &Tensor4<T>,
    w: &Param<T>,
) -> Result<(Param<T>, Param<T>)> {
    check_grad_out(grad_out, w, x.dims)?;
    let [n, c, h, wd] = x.dims;
    let o = w.dims[0];
    let grad_b: Vec<T> = (0..o)
        .into_par_iter()
        .map(|oi| {
            let mut s = T::zero();
            for ni in 0..n {
                s += grad_out.plane(ni, oi).iter().copied().sum::<T>();
            }
            s
        })
        .collect();

    let mut grad_w = Param::zeros(&w.dims);
    grad_w
        .data
        .par_chunks_mut(c * 9)
        .enumerate()
        .for_each(|(oi, gk)| {
            for ci in 0..c {
                for ky in 0..KERNEL {
                    let (y_lo, y_hi) = tap_range(ky, h);
                    for kx in 0..KERNEL {
                        let (x_lo, x_hi) = tap_range(kx, wd);
                        let mut acc = T::zero();
                        for ni in 0..n {
                            let g = grad_out.plane(ni, oi);
                            let inp = x.plane(ni, ci);
                            for y in y_lo..y_hi {
                                let sy = y + ky - 1;
                                let grow = &g[y * wd + x_lo..y * wd + x_hi];
                                let irow = &inp[sy * wd + x_lo + kx - 1..sy * wd + x_hi + kx - 1];
                                acc += grow.iter().zip(irow).map(|(&a, &b)| a * b).sum::<T>();
                            }
                        }
                        gk[ci * 9 + ky * KERNEL + kx] = acc;
                    }
                }
            }
        });

    Ok((
        grad_w,
        Param {
            dims: vec![o],
            data: grad_b,
        },
    ))
}

/// Gradient with respect to the convolution input.
pub fn conv2d_backward_input<T: Real>(
    grad_out: &Tensor4<T>,
    w: &Param<T>,
    input_dims: [usize; 4],
) -> Result<Tensor4<T>> {
    check_grad_out(grad_out, w, input_dims)?;
    let [_, c, h, wd] = input_dims;
    let o = w.dims[0];
    let mut grad_x = Tensor4::zeros(input_dims);
    grad_x
        .data
        .par_chunks_mut(h * wd)
        .enumerate()
        .for_each(|(idx, gplane)| {
            let (ni, ci) = (idx / c, idx % c);
            for oi in 0..o {
                let g = grad_out.plane(ni, oi);
                let k = &w.data[(oi * c + ci) * 9..(oi * c + ci + 1) * 9];
                for ky in 0..KERNEL {
                    let (y_lo, y_hi) = tap_range(ky, h);
                    for kx in 0..KERNEL {
                        let wv = k[ky * KERNEL + kx];
                        let (x_lo, x_hi) = tap_range(kx, wd);
                        for y in y_lo..y_hi {
                            let sy = y + ky - 1;
                            let grow = &g[y * wd + x_lo..y * wd + x_hi];
                            let xrow =
                                &mut gplane[sy * wd + x_lo + kx - 1..sy * wd + x_hi + kx - 1];
                            for (xv, &gv) in xrow.iter_mut().zip(grow) {
                                *xv += wv * gv;
                            }
                        }
                    }
                }
            }
        });

    Ok(grad_x)
}

/// Batch statistics and normalized activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub xhat: Tensor4<T>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn channel_values<T: Real>(x: &Tensor4<T>, ci: usize) -> impl Iterator<Item = T> + '_ {
    (0..x.batch()).flat_map(move |ni| x.plane(ni, ci).iter().copied())
}

/// Train-mode batch normalization over `(batch, height, width)` per channel.
pub fn batchnorm_forward_train<T: Real>(
    x: &Tensor4<T>,
    gamma: &Param<T>,
    beta: &Param<T>,
) -> Result<(Tensor4<T>, BnCache<T>)> {
    let [n, c, h, w] = x.dims;
    let count = n * h * w;
    if count < 2 {
        return Err(Error::Shape(
            "batch norm in train mode needs batch*height*width >= 2".into(),
        ));
    }
    check_bn_shapes(c, gamma, beta)?;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let m = channel_values(x, ci).map(|v| v.to_f64()).sum::<f64>() / count as f64;
        let v = channel_values(x, ci)
            .map(|v| (v.to_f64() - m).powi(2))
            .sum::<f64>()
            / count as f64;
        mean[ci] = m;
        var[ci] = v;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Tensor4::zeros(x.dims);
    let mut y = Tensor4::zeros(x.dims);
    let p = h * w;
    for ni in 0..n {
        for ci in 0..c {
            let (m, s) = (T::from_f64(mean[ci]), T::from_f64(inv_std[ci]));
            let (g, b) = (gamma.data[ci], beta.data[ci]);
            let start = (ni * c + ci) * p;
            for i in start..start + p {
                let xh = (x.data[i] - m) * s;
                xhat.data[i] = xh;
                y.data[i] = g * xh + b;
            }
        }
    }
    Ok((
        y,
        BnCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    ))
}

fn check_bn_shapes<T: Real>(c: usize, gamma: &Param<T>, beta: &Param<T>) -> Result<()> {
    if gamma.dims != [c] || beta.dims != [c] {
        return Err(Error::Shape(format!(
            "batch norm parameters {:?}/{:?} for {c} channels",
            gamma.dims, beta.dims
        )));
    }
    Ok(())
}

/// Inference-mode batch normalization with running statistics.
pub fn batchnorm_forward_infer<T: Real>(
    x: &Tensor4<T>,
    gamma: &Param<T>,
    beta: &Param<T>,
    running_mean: &Param<T>,
    running_var: &Param<T>,
) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.dims;
    check_bn_shapes(c, gamma, beta)?;
    check_bn_shapes(c, running_mean, running_var)?;
    let p = h * w;
    let mut y = Tensor4::zeros(x.dims);
    for ni in 0..n {
        for ci in 0..c {
            let m = running_mean.data[ci];
            let s = T::from_f64(1.0 / (running_var.data[ci].to_f64() + BN_EPS).sqrt());
            let (g, b) = (gamma.data[ci], beta.data[ci]);
            let start = (ni * c + ci) * p;
            for i in start..start + p {
                y.data[i] = g * ((x.data[i] - m) * s) + b;
            }
        }
    }
    Ok(y)
}

pub struct BnGrads<T> {
    pub grad_x: Tensor4<T>,
    pub grad_gamma: Param<T>,
    pub grad_beta: Param<T>,
}

pub fn batchnorm_backward<T: Real>(
    grad_y: &Tensor4<T>,
    cache: &BnCache<T>,
    gamma: &Param<T>,
) -> Result<BnGrads<T>> {
    let [n, c, h, w] = cache.xhat.dims;
    if grad_y.dims != cache.xhat.dims {
        return Err(Error::Shape("batch norm gradient shape".into()));
    }
    let count = (n * h * w) as f64;
    let p = h * w;
    let mut grad_gamma = Param::zeros(&[c]);
    let mut grad_beta = Param::zeros(&[c]);
    let mut grad_x = Tensor4::zeros(cache.xhat.dims);
    for ci in 0..c {
        let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
        for ni in 0..n {
            let start = (ni * c + ci) * p;
            for i in start..start + p {
                let g = grad_y.data[i].to_f64();
                sum_g += g;
                sum_gx += g * cache.xhat.data[i].to_f64();
            }
        }
        grad_gamma.data[ci] = T::from_f64(sum_gx);
        grad_beta.data[ci] = T::from_f64(sum_g);
        // dx = gamma * inv_std / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
        let scale = gamma.data[ci].to_f64() * cache.inv_std[ci] / count;
        for ni in 0..n {
            let start = (ni * c + ci) * p;
            for i in start..start + p {
                let g = grad_y.data[i].to_f64();
                let xh = cache.xhat.data[i].to_f64();
                grad_x.data[i] = T::from_f64(scale * (count * g - sum_g - xh * sum_gx));
            }
        }
    }
    Ok(BnGrads {
        grad_x,
        grad_gamma,
        grad_beta,
    })
}

pub fn relu_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    Tensor4 {
        dims: x.dims,
        data: x.data.iter().map(|&v| v.max(T::zero())).collect(),
    }
}

/// Gradient passes where the input was strictly positive.
pub fn relu_backward<T: Real>(grad_y: &Tensor4<T>, x: &Tensor4<T>) -> Tensor4<T> {
    Tensor4 {
        dims: x.dims,
        data: grad_y
            .data
            .iter()
            .zip(&x.data)
            .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
            .collect(),
    }
}

pub fn pool_out_len(d: usize) -> Option<usize> {
    (d >= POOL_WINDOW).then(|| (d - POOL_WINDOW) / POOL_STRIDE + 1)
}

/// 3x3 max pooling with stride 2, no padding. Also returns, per output, the
/// flat in-plane index of the chosen input (first maximum in row-major order).
pub fn maxpool_forward<T: Real>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<u32>)> {
    let [n, c, h, w] = x.dims;
    let (Some(oh), Some(ow)) = (pool_out_len(h), pool_out_len(w)) else {
        return Err(Error::Shape(format!(
            "max pool needs spatial dims >= {POOL_WINDOW}, got {h}x{w}"
        )));
    };
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    let mut argmax = vec![0u32; n * c * oh * ow];
    out.data
        .par_chunks_mut(oh * ow)
        .zip(argmax.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(idx, (plane, amax))| {
            let inp = x.plane(idx / c, idx % c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let (y0, x0) = (oy * POOL_STRIDE, ox * POOL_STRIDE);
                    let mut best = y0 * w + x0;
                    for dy in 0..POOL_WINDOW {
                        for dx in 0..POOL_WINDOW {
                            let i = (y0 + dy) * w + x0 + dx;
                            if inp[i] > inp[best] {
                                best = i;
                            }
                        }
                    }
                    plane[oy * ow + ox] = inp[best];
                    amax[oy * ow + ox] = best as u32;
                }
            }
        });
    Ok((out, argmax))
}

pub fn maxpool_backward<T: Real>(
    grad_y: &Tensor4<T>,
    argmax: &[u32],
    input_dims: [usize; 4],
) -> Tensor4<T> {
    let mut grad_x = Tensor4::zeros(input_dims);
    let in_plane = input_dims[2] * input_dims[3];
    let out_plane = grad_y.plane_len();
    grad_x
        .data
        .par_chunks_mut(in_plane)
        .enumerate()
        .for_each(|(idx, gplane)| {
            let g = &grad_y.data[idx * out_plane..(idx + 1) * out_plane];
            let a = &argmax[idx * out_plane..(idx + 1) * out_plane];
            for (&gv, &i) in g.iter().zip(a) {
                gplane[i as usize] += gv;
            }
        });
    grad_x
}

/// `logits[b, k] = sum_f w[k, f] * features[b, f] + bias[k]`.
pub fn dense_forward<T: Real>(
    features: &[T],
    batch: usize,
    w: &Param<T>,
    b: &Param<T>,
) -> Result<Vec<T>> {
    let (k, f) = dense_dims(features, batch, w, b)?;
    let mut logits = vec![T::zero(); batch * k];
    logits
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(bi, row)| {
            let feat = &features[bi * f..(bi + 1) * f];
            for (ki, out) in row.iter_mut().enumerate() {
                let wr = &w.data[ki * f..(ki + 1) * f];
                *out = b.data[ki] + wr.iter().zip(feat).map(|(&a, &x)| a * x).sum::<T>();
            }
        });
    Ok(logits)
}

fn dense_dims<T: Real>(features: &[T], batch: usize, w: &Param<T>, b: &Param<T>) -> Result<(usize, usize)> {
    if w.dims.len() != 2 || b.dims.len() != 1 || b.dims[0] != w.dims[0] {
        return Err(Error::Shape(format!("dense weights {:?} / bias {:?}", w.dims, b.dims)));
    }
    let (k, f) = (w.dims[0], w.dims[1]);
    if batch == 0 || features.len() != batch * f {
        return Err(Error::Shape(format!(
            "dense input of {} values for batch {batch} x {f} features",
            features.len()
        )));
    }
    Ok((k, f))
}

/// Numerically stable softmax of each row of `logits` (`k` columns).
pub fn softmax_rows<T: Real>(logits: &[T], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v.to_f64()));
        let exps: Vec<f64> = row.iter().map(|&v| (v.to_f64() - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / z));
    }
    out
}

pub struct DenseXent<T> {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub probs: Vec<f64>,
    pub grad_features: Vec<T>,
    pub grad_w: Param<T>,
    pub grad_b: Param<T>,
}

/// Dense layer followed by softmax cross-entropy, averaged over the batch.
pub fn dense_softmax_xent<T: Real>(
    features: &[T],
    batch: usize,
    w: &Param<T>,
    b: &Param<T>,
    labels: &[usize],
) -> Result<DenseXent<T>> {
    let (k, f) = dense_dims(features, batch, w, b)?;
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for batch {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidParam(format!("label {bad} out of range for {k} classes")));
    }
    let logits = dense_forward(features, batch, w, b)?;
    let mut loss = 0.0;
    let mut dlogits = vec![T::zero(); batch * k];
    let mut probs = Vec::with_capacity(batch * k);
    for (bi, row) in logits.chunks(k).enumerate() {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v.to_f64()));
        let z: f64 = row.iter().map(|&v| (v.to_f64() - m).exp()).sum();
        let log_z = m + z.ln();
        loss += log_z - row[labels[bi]].to_f64();
        for (ki, &v) in row.iter().enumerate() {
            let p = (v.to_f64() - log_z).exp();
            probs.push(p);
            let target = if ki == labels[bi] { 1.0 } else { 0.0 };
            dlogits[bi * k + ki] = T::from_f64((p - target) / batch as f64);
        }
    }
    loss /= batch as f64;

    let mut grad_w = Param::zeros(&w.dims);
    grad_w
        .data
        .par_chunks_mut(f)
        .enumerate()
        .for_each(|(ki, gw)| {
            for bi in 0..batch {
                let d = dlogits[bi * k + ki];
                let feat = &features[bi * f..(bi + 1) * f];
                for (g, &x) in gw.iter_mut().zip(feat) {
                    *g += d * x;
                }
            }
        });
    let grad_b = Param {
        dims: vec![k],
        data: (0..k)
            .map(|ki| (0..batch).map(|bi| dlogits[bi * k + ki]).sum())
            .collect(),
    };
    let mut grad_features = vec![T::zero(); batch * f];
    grad_features
        .par_chunks_mut(f)
        .enumerate()
        .for_each(|(bi, gf)| {
            for ki in 0..k {
                let d = dlogits[bi * k + ki];
                let wr = &w.data[ki * f..(ki + 1) * f];
                for (g, &wv) in gf.iter_mut().zip(wr) {
                    *g += d * wv;
                }
            }
        });
    Ok(DenseXent {
        loss,
        probs,
        grad_features,
        grad_w,
        grad_b,
    })
}
