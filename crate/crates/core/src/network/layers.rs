//! Differentiable building blocks. Every layer is a pair of free functions so
//! each can be checked against finite differences in isolation.

use rand::Rng;
use rayon::prelude::*;

use super::tensor::{col2im, im2col, matmul, Real, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Gradients of a convolution-like layer.
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

/// 4x4 stride-2 pad-1 convolution. `w` is `[cout, cin, 4, 4]`. Returns the
/// output and the per-sample patch matrices needed by the backward pass.
pub fn conv_forward<T: Real>(x: &Tensor<T>, w: &[T], b: &[T], cout: usize) -> (Tensor<T>, Vec<T>) {
    let [n, cin, h, wd] = x.shape;
    assert!(h % 2 == 0 && wd % 2 == 0, "conv input must have even dims");
    assert_eq!(w.len(), cout * cin * 16);
    let (ho, wo) = (h / 2, wd / 2);
    let k = cin * 16;
    let col_len = k * ho * wo;
    let mut cols = vec![T::zero(); n * col_len];
    let mut out = Tensor::zeros([n, cout, ho, wo]);
    let out_len = out.sample_len();
    cols.par_chunks_mut(col_len)
        .zip(out.data.par_chunks_mut(out_len))
        .enumerate()
        .for_each(|(s, (col, y))| {
            im2col(x.sample(s), cin, h, wd, col);
            matmul(cout, k, ho * wo, w, false, col, false, y, false);
            for (co, row) in y.chunks_mut(ho * wo).enumerate() {
                row.iter_mut().for_each(|v| *v += b[co]);
            }
        });
    (out, cols)
}

pub fn conv_backward<T: Real>(
    dy: &Tensor<T>,
    cols: &[T],
    w: &[T],
    x_shape: [usize; 4],
    need_dx: bool,
) -> ConvGrads<T> {
    let [n, cin, h, wd] = x_shape;
    let cout = dy.channels();
    let hw = dy.height() * dy.width();
    let k = cin * 16;
    let col_len = k * hw;
    let mut dw = vec![T::zero(); cout * k];
    let mut db = vec![T::zero(); cout];
    for s in 0..n {
        let g = dy.sample(s);
        matmul(cout, hw, k, g, false, &cols[s * col_len..(s + 1) * col_len], true, &mut dw, true);
        for (co, row) in g.chunks(hw).enumerate() {
            db[co] += row.iter().fold(T::zero(), |a, v| a + *v);
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(x_shape);
        let len = dx.sample_len();
        dx.data.par_chunks_mut(len).enumerate().for_each(|(s, dst)| {
            let mut dcol = vec![T::zero(); col_len];
            matmul(k, cout, hw, w, true, dy.sample(s), false, &mut dcol, false);
            col2im(&dcol, cin, h, wd, dst);
        });
        dx
    });
    ConvGrads { dx, dw, db }
}

/// 4x4 stride-2 pad-1 transposed convolution doubling the resolution. `w` is
/// `[cin, cout, 4, 4]`.
pub fn deconv_forward<T: Real>(x: &Tensor<T>, w: &[T], b: &[T], cout: usize) -> Tensor<T> {
    let [n, cin, h, wd] = x.shape;
    assert_eq!(w.len(), cin * cout * 16);
    let (ho, wo) = (h * 2, wd * 2);
    let m = cout * 16;
    let mut out = Tensor::zeros([n, cout, ho, wo]);
    let out_len = out.sample_len();
    out.data.par_chunks_mut(out_len).enumerate().for_each(|(s, y)| {
        let mut col = vec![T::zero(); m * h * wd];
        matmul(m, cin, h * wd, w, true, x.sample(s), false, &mut col, false);
        col2im(&col, cout, ho, wo, y);
        for (co, plane) in y.chunks_mut(ho * wo).enumerate() {
            plane.iter_mut().for_each(|v| *v += b[co]);
        }
    });
    out
}

pub fn deconv_backward<T: Real>(dy: &Tensor<T>, x: &Tensor<T>, w: &[T], need_dx: bool) -> ConvGrads<T> {
    let [n, cin, h, wd] = x.shape;
    let cout = dy.channels();
    let m = cout * 16;
    let hw = h * wd;
    let mut dcols = vec![T::zero(); n * m * hw];
    dcols.par_chunks_mut(m * hw).enumerate().for_each(|(s, dcol)| {
        im2col(dy.sample(s), cout, dy.height(), dy.width(), dcol);
    });
    let mut dw = vec![T::zero(); cin * m];
    let mut db = vec![T::zero(); cout];
    for s in 0..n {
        matmul(cin, hw, m, x.sample(s), false, &dcols[s * m * hw..(s + 1) * m * hw], true, &mut dw, true);
        for (co, plane) in dy.sample(s).chunks(dy.height() * dy.width()).enumerate() {
            db[co] += plane.iter().fold(T::zero(), |a, v| a + *v);
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(x.shape);
        let len = dx.sample_len();
        dx.data.par_chunks_mut(len).enumerate().for_each(|(s, dst)| {
            matmul(cin, m, hw, w, false, &dcols[s * m * hw..(s + 1) * m * hw], false, dst, false);
        });
        dx
    });
    ConvGrads { dx, dw, db }
}

/// Saved state of a training-mode batch norm.
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Unbiased batch variance, for the running estimate.
    pub var_unbiased: Vec<T>,
}

/// Batch normalization with batch statistics over (batch, height, width).
pub fn batchnorm_forward_train<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T]) -> (Tensor<T>, BnCache<T>) {
    let [n, c, h, w] = x.shape;
    let hw = h * w;
    let count = T::from_usize(n * hw).unwrap();
    let eps = T::lit(BN_EPS);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for i in 0..n {
            s = x.sample(i)[ch * hw..(ch + 1) * hw].iter().fold(s, |a, v| a + *v);
        }
        let mu = s / count;
        let mut q = T::zero();
        for i in 0..n {
            q = x.sample(i)[ch * hw..(ch + 1) * hw].iter().fold(q, |a, v| a + (*v - mu) * (*v - mu));
        }
        mean[ch] = mu;
        var[ch] = q / count;
    }
    let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
    let mut xhat = x.clone();
    let mut y = x.clone();
    for i in 0..n {
        let xs = xhat.sample_mut(i);
        for ch in 0..c {
            for v in &mut xs[ch * hw..(ch + 1) * hw] {
                *v = (*v - mean[ch]) * inv_std[ch];
            }
        }
        let ys = y.sample_mut(i);
        for ch in 0..c {
            for (o, v) in ys[ch * hw..(ch + 1) * hw].iter_mut().zip(&xhat.sample(i)[ch * hw..(ch + 1) * hw]) {
                *o = gamma[ch] * *v + beta[ch];
            }
        }
    }
    let m = n * hw;
    let var_unbiased = if m > 1 {
        let f = T::from_usize(m).unwrap() / T::from_usize(m - 1).unwrap();
        var.iter().map(|v| *v * f).collect()
    } else {
        var.clone()
    };
    (y, BnCache { xhat, inv_std, mean, var_unbiased })
}

/// Batch normalization with fixed (running) statistics.
pub fn batchnorm_forward_eval<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T], mean: &[T], var: &[T]) -> Tensor<T> {
    let [n, c, h, w] = x.shape;
    let hw = h * w;
    let eps = T::lit(BN_EPS);
    let mut y = x.clone();
    for i in 0..n {
        let ys = y.sample_mut(i);
        for ch in 0..c {
            let scale = gamma[ch] / (var[ch] + eps).sqrt();
            let shift = beta[ch] - mean[ch] * scale;
            for v in &mut ys[ch * hw..(ch + 1) * hw] {
                *v = *v * scale + shift;
            }
        }
    }
    y
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward<T: Real>(dy: &Tensor<T>, cache: &BnCache<T>, gamma: &[T]) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let [n, c, h, w] = dy.shape;
    let hw = h * w;
    let m = T::from_usize(n * hw).unwrap();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for i in 0..n {
        let g = dy.sample(i);
        let xh = cache.xhat.sample(i);
        for ch in 0..c {
            for (gv, xv) in g[ch * hw..(ch + 1) * hw].iter().zip(&xh[ch * hw..(ch + 1) * hw]) {
                dgamma[ch] += *gv * *xv;
                dbeta[ch] += *gv;
            }
        }
    }
    let mut dx = dy.clone();
    for i in 0..n {
        let xh = cache.xhat.sample(i);
        let d = dx.sample_mut(i);
        for ch in 0..c {
            let k = gamma[ch] * cache.inv_std[ch] / m;
            for (dv, xv) in d[ch * hw..(ch + 1) * hw].iter_mut().zip(&xh[ch * hw..(ch + 1) * hw]) {
                *dv = k * (m * *dv - dbeta[ch] - *xv * dgamma[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Leaky rectifier; `slope = 0` gives the plain rectifier.
pub fn leaky_forward<T: Real>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::lit(slope);
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = *v * s
        }
    });
    y
}

/// Gradient through a leaky rectifier, given its output `y` (whose sign
/// matches the input's for any non-negative slope).
pub fn leaky_backward<T: Real>(dy: &Tensor<T>, y: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::lit(slope);
    let mut dx = dy.clone();
    dx.data.iter_mut().zip(&y.data).for_each(|(d, v)| {
        if *v <= T::zero() {
            *d = *d * s
        }
    });
    dx
}

/// Inverted dropout: zeroes each value with probability `rate` and scales the
/// survivors by `1/(1-rate)`. Returns the output and the multiplier mask.
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(x: &Tensor<T>, rate: f64, rng: &mut R) -> (Tensor<T>, Vec<T>) {
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.data.len()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
    let mut y = x.clone();
    y.data.iter_mut().zip(&mask).for_each(|(v, m)| *v = *v * *m);
    (y, mask)
}

pub fn dropout_backward<T: Real>(dy: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut dx = dy.clone();
    dx.data.iter_mut().zip(mask).for_each(|(v, m)| *v = *v * *m);
    dx
}

/// Occupancy probabilities from paired logits: channel `2k` is "empty" and
/// `2k+1` "occupied" for slice `k`. Output is `[n, c/2, h, w]`.
pub fn paired_softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = logits.shape;
    let hw = h * w;
    let mut out = Tensor::zeros([n, c / 2, h, w]);
    for i in 0..n {
        let l = logits.sample(i);
        let o = out.sample_mut(i);
        for k in 0..c / 2 {
            for p in 0..hw {
                let d = l[(2 * k + 1) * hw + p] - l[2 * k * hw + p];
                o[k * hw + p] = sigmoid(d);
            }
        }
    }
    out
}

fn sigmoid<T: Real>(d: T) -> T {
    if d >= T::zero() {
        T::one() / (T::one() + (-d).exp())
    } else {
        let e = d.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean two-way cross-entropy over all voxels. `target` is `[n, c/2, h, w]`
/// with values in `{0, 1}`. Returns the loss and its gradient w.r.t. `logits`.
pub fn paired_cross_entropy<T: Real>(logits: &Tensor<T>, target: &Tensor<T>) -> (T, Tensor<T>) {
    let [n, c, h, w] = logits.shape;
    assert_eq!(target.shape, [n, c / 2, h, w], "target shape");
    let hw = h * w;
    let count = T::from_usize(n * (c / 2) * hw).unwrap();
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(logits.shape);
    for i in 0..n {
        let l = logits.sample(i);
        let t = target.sample(i);
        let g = grad.sample_mut(i);
        for k in 0..c / 2 {
            for p in 0..hw {
                let d = l[(2 * k + 1) * hw + p] - l[2 * k * hw + p];
                let y = t[k * hw + p];
                // -[y ln s(d) + (1-y) ln(1 - s(d))]
                loss += y * softplus(-d) + (T::one() - y) * softplus(d);
                let e = (sigmoid(d) - y) / count;
                g[(2 * k + 1) * hw + p] = e;
                g[2 * k * hw + p] = -e;
            }
        }
    }
    (loss / count, grad)
}
