use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar type the network runs in: `f32` for training and inference, `f64`
/// for gradient checks.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    /// `C = alpha * A * B + beta * C` with explicit row and column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits")
    }
}

impl Real for f32 {
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
    ) {
        // SAFETY: callers in this module check slice lengths against the strides.
        unsafe {
            matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
        }
    }
}

impl Real for f64 {
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
    ) {
        // SAFETY: see the f32 impl.
        unsafe {
            matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
        }
    }
}

/// Row-major `C[m,n] (+)= op(A)[m,k] * op(B)[k,n]`. With `ta`, `a` is stored as
/// `[k,m]`; with `tb`, `b` is stored as `[n,k]`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T], accumulate: bool) {
    assert_eq!(a.len(), m * k, "lhs size");
    assert_eq!(b.len(), k * n, "rhs size");
    assert_eq!(c.len(), m * n, "output size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    if k == 0 {
        if !accumulate {
            c.fill(T::zero());
        }
        return;
    }
    T::gemm_raw(m, k, n, a, rsa, csa, b, rsb, csb, beta, c);
}

/// Dense `[batch, channels, height, width]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::SizeMismatch(format!("tensor {shape:?} needs {want} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Values per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let l = self.sample_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect() }
    }

    /// Channel-wise concatenation of two tensors with equal batch and spatial dims.
    pub fn concat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        if a.shape[0] != b.shape[0] || a.shape[2] != b.shape[2] || a.shape[3] != b.shape[3] {
            return Err(Error::SizeMismatch(format!("cannot concatenate {:?} and {:?}", a.shape, b.shape)));
        }
        let mut out = Tensor::zeros([a.shape[0], a.shape[1] + b.shape[1], a.shape[2], a.shape[3]]);
        let la = a.sample_len();
        for n in 0..a.batch() {
            let dst = out.sample_mut(n);
            dst[..la].copy_from_slice(a.sample(n));
            dst[la..].copy_from_slice(b.sample(n));
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::concat_channels`]: splits off the first `c` channels.
    pub fn split_channels(&self, c: usize) -> (Tensor<T>, Tensor<T>) {
        let [n, ch, h, w] = self.shape;
        let mut a = Tensor::zeros([n, c, h, w]);
        let mut b = Tensor::zeros([n, ch - c, h, w]);
        let la = a.sample_len();
        for i in 0..n {
            let s = self.sample(i);
            a.sample_mut(i).copy_from_slice(&s[..la]);
            b.sample_mut(i).copy_from_slice(&s[la..]);
        }
        (a, b)
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

/// Patch matrix for a 4x4, stride-2, pad-1 convolution over `src` (`[c,h,w]`):
/// row `c*16 + ky*4 + kx`, column `oy*(w/2) + ox`.
pub fn im2col<T: Real>(src: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let (ho, wo) = (h / 2, w / 2);
    debug_assert_eq!(col.len(), c * 16 * ho * wo);
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..4 {
            for kx in 0..4 {
                let row = &mut col[((ci * 16) + ky * 4 + kx) * ho * wo..][..ho * wo];
                for oy in 0..ho {
                    let y = (2 * oy + ky) as isize - 1;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if y < 0 || y >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let line = &plane[y as usize * w..(y as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let x = (2 * ox + kx) as isize - 1;
                        *d = if x < 0 || x >= w as isize { T::zero() } else { line[x as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch columns back, accumulating into `dst`.
pub fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, dst: &mut [T]) {
    let (ho, wo) = (h / 2, w / 2);
    debug_assert_eq!(col.len(), c * 16 * ho * wo);
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..4 {
            for kx in 0..4 {
                let row = &col[((ci * 16) + ky * 4 + kx) * ho * wo..][..ho * wo];
                for oy in 0..ho {
                    let y = (2 * oy + ky) as isize - 1;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let line = &mut plane[y as usize * w..(y as usize + 1) * w];
                    for (ox, v) in row[oy * wo..(oy + 1) * wo].iter().enumerate() {
                        let x = (2 * ox + kx) as isize - 1;
                        if x >= 0 && x < w as isize {
                            line[x as usize] += *v;
                        }
                    }
                }
            }
        }
    }
}
