//! Minimal dense/convolutional layers with explicit backward passes.
//!
//! Activations use a channel-major `C × B × H × W` layout so a 3×3
//! convolution over the whole batch is one GEMM against an im2col buffer,
//! and channel concatenation is plain vector concatenation.

mod layers;

pub use layers::{silu, silu_grad, Conv3x3, Dense};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of a network (f32 for training, f64 for
/// gradient checks).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    /// `C ← α·A·B + β·C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                check_extent(c.len(), m, n, rsc, csc);
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Batched activation in `C × B × H × W` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<S> {
    pub c: usize,
    pub b: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Act<S> {
    pub fn zeros(c: usize, b: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            b,
            h,
            w,
            data: vec![S::zero(); c * b * h * w],
        }
    }

    pub fn same_dims(&self) -> Self {
        Self::zeros(self.c, self.b, self.h, self.w)
    }

    /// Pixels per channel across the batch.
    #[inline]
    pub fn plane(&self) -> usize {
        self.b * self.h * self.w
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Channel concatenation `[self; other]`.
    pub fn concat(&self, other: &Self) -> Self {
        assert_eq!((self.b, self.h, self.w), (other.b, other.h, other.w));
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self {
            c: self.c + other.c,
            data,
            ..*self
        }
    }

    /// Split channels at `c0` (inverse of [`Act::concat`]).
    pub fn split(&self, c0: usize) -> (Self, Self) {
        let cut = c0 * self.plane();
        (
            Self {
                c: c0,
                data: self.data[..cut].to_vec(),
                ..*self
            },
            Self {
                c: self.c - c0,
                data: self.data[cut..].to_vec(),
                ..*self
            },
        )
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// 2×2 average pooling.
    pub fn avg_pool2(&self) -> Self {
        let (h2, w2) = (self.h / 2, self.w / 2);
        let mut out = Self::zeros(self.c, self.b, h2, w2);
        let quarter = S::of(0.25);
        for cb in 0..self.c * self.b {
            let src = &self.data[cb * self.h * self.w..(cb + 1) * self.h * self.w];
            let dst = &mut out.data[cb * h2 * w2..(cb + 1) * h2 * w2];
            for y in 0..h2 {
                for x in 0..w2 {
                    let i = 2 * y * self.w + 2 * x;
                    dst[y * w2 + x] = (src[i] + src[i + 1] + src[i + self.w] + src[i + self.w + 1]) * quarter;
                }
            }
        }
        out
    }

    /// Backward of [`Act::avg_pool2`] for an input of size `h × w`.
    pub fn avg_pool2_backward(&self, h: usize, w: usize) -> Self {
        let mut out = Self::zeros(self.c, self.b, h, w);
        let quarter = S::of(0.25);
        for cb in 0..self.c * self.b {
            let src = &self.data[cb * self.h * self.w..(cb + 1) * self.h * self.w];
            let dst = &mut out.data[cb * h * w..(cb + 1) * h * w];
            for y in 0..self.h {
                for x in 0..self.w {
                    let g = src[y * self.w + x] * quarter;
                    let i = 2 * y * w + 2 * x;
                    dst[i] = g;
                    dst[i + 1] = g;
                    dst[i + w] = g;
                    dst[i + w + 1] = g;
                }
            }
        }
        out
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&self) -> Self {
        let (h2, w2) = (self.h * 2, self.w * 2);
        let mut out = Self::zeros(self.c, self.b, h2, w2);
        for cb in 0..self.c * self.b {
            let src = &self.data[cb * self.h * self.w..(cb + 1) * self.h * self.w];
            let dst = &mut out.data[cb * h2 * w2..(cb + 1) * h2 * w2];
            for y in 0..h2 {
                for x in 0..w2 {
                    dst[y * w2 + x] = src[(y / 2) * self.w + x / 2];
                }
            }
        }
        out
    }

    /// Backward of [`Act::upsample2`].
    pub fn upsample2_backward(&self) -> Self {
        let (h2, w2) = (self.h / 2, self.w / 2);
        let mut out = Self::zeros(self.c, self.b, h2, w2);
        for cb in 0..self.c * self.b {
            let src = &self.data[cb * self.h * self.w..(cb + 1) * self.h * self.w];
            let dst = &mut out.data[cb * h2 * w2..(cb + 1) * h2 * w2];
            for y in 0..self.h {
                for x in 0..self.w {
                    dst[(y / 2) * w2 + x / 2] += src[y * self.w + x];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c = vec![1.0; m * n];
        f64::gemm(m, k, n, 1.0, &a, k as isize, 1, &b, n as isize, 1, 2.0, &mut c, n as isize, 1);
        for i in 0..m {
            for j in 0..n {
                let dot: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c[i * n + j] - (dot + 2.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_and_upsample_adjoint() {
        // <pool(x), y> = <x, pool_backward(y)>, and likewise for upsampling.
        let x = Act::<f64> {
            c: 2,
            b: 2,
            h: 4,
            w: 4,
            data: (0..64).map(|i| (i as f64 * 0.37).cos()).collect(),
        };
        let y = Act::<f64> {
            c: 2,
            b: 2,
            h: 2,
            w: 2,
            data: (0..16).map(|i| (i as f64 * 1.3).sin()).collect(),
        };
        let dot = |a: &Act<f64>, b: &Act<f64>| a.data.iter().zip(&b.data).map(|(p, q)| p * q).sum::<f64>();
        assert!((dot(&x.avg_pool2(), &y) - dot(&x, &y.avg_pool2_backward(4, 4))).abs() < 1e-12);
        assert!((dot(&y.upsample2(), &x) - dot(&y, &x.upsample2_backward())).abs() < 1e-12);
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Act::<f32> { c: 1, b: 2, h: 1, w: 2, data: vec![1.0, 2.0, 3.0, 4.0] };
        let b = Act::<f32> { c: 2, b: 2, h: 1, w: 2, data: (5..13).map(|v| v as f32).collect() };
        let (p, q) = a.concat(&b).split(1);
        assert_eq!(p, a);
        assert_eq!(q, b);
    }
}
