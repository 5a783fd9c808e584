use crate::rng::RandomSource;

use super::{Act, Scalar};

#[inline]
pub fn silu<S: Scalar>(x: S) -> S {
    x / (S::one() + (-x).exp())
}

/// d/dx of `x·sigmoid(x)`.
#[inline]
pub fn silu_grad<S: Scalar>(x: S) -> S {
    let s = S::one() / (S::one() + (-x).exp());
    s * (S::one() + x * (S::one() - s))
}

fn gaussian_init<S: Scalar>(n: usize, std: f64, rng: &mut RandomSource) -> Vec<S> {
    (0..n).map(|_| S::of(rng.normal() * std)).collect()
}

/// 3×3 convolution, stride 1, zero padding 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3<S> {
    pub cin: usize,
    pub cout: usize,
    /// `cout × (cin·9)`, row-major.
    pub w: Vec<S>,
    pub b: Vec<S>,
}

impl<S: Scalar> Conv3x3<S> {
    /// He-normal weights scaled by `gain`; zero bias.
    pub fn new(cin: usize, cout: usize, gain: f64, rng: &mut RandomSource) -> Self {
        let fan_in = (cin * 9) as f64;
        Self {
            cin,
            cout,
            w: gaussian_init(cout * cin * 9, gain * (2.0 / fan_in).sqrt(), rng),
            b: vec![S::zero(); cout],
        }
    }

    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            w: vec![S::zero(); cout * cin * 9],
            b: vec![S::zero(); cout],
        }
    }

    /// Returns the output and the im2col buffer needed by [`Conv3x3::backward`].
    pub fn forward(&self, x: &Act<S>) -> (Act<S>, Vec<S>) {
        assert_eq!(x.c, self.cin, "conv input channels");
        let cols = im2col(x);
        let n = x.plane();
        let k = self.cin * 9;
        let mut y = Act::zeros(self.cout, x.b, x.h, x.w);
        for (co, row) in y.data.chunks_exact_mut(n).enumerate() {
            row.fill(self.b[co]);
        }
        S::gemm(
            self.cout,
            k,
            n,
            S::one(),
            &self.w,
            k as isize,
            1,
            &cols,
            n as isize,
            1,
            S::one(),
            &mut y.data,
            n as isize,
            1,
        );
        (y, cols)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, dy: &Act<S>, cols: &[S], grad: &mut Self, input_dims: (usize, usize, usize)) -> Act<S> {
        let n = dy.plane();
        let k = self.cin * 9;
        for (co, row) in dy.data.chunks_exact(n).enumerate() {
            grad.b[co] += row.iter().copied().sum::<S>();
        }
        // dW += dy · colsᵀ
        S::gemm(
            self.cout,
            n,
            k,
            S::one(),
            &dy.data,
            n as isize,
            1,
            cols,
            1,
            n as isize,
            S::one(),
            &mut grad.w,
            k as isize,
            1,
        );
        // dcols = Wᵀ · dy
        let mut dcols = vec![S::zero(); k * n];
        S::gemm(
            k,
            self.cout,
            n,
            S::one(),
            &self.w,
            1,
            k as isize,
            &dy.data,
            n as isize,
            1,
            S::zero(),
            &mut dcols,
            n as isize,
            1,
        );
        let (b, h, w) = input_dims;
        col2im(&dcols, self.cin, b, h, w)
    }

    /// Input-gradient only; skips the weight-gradient GEMM.
    pub fn backward_input(&self, dy: &Act<S>, input_dims: (usize, usize, usize)) -> Act<S> {
        let n = dy.plane();
        let k = self.cin * 9;
        let mut dcols = vec![S::zero(); k * n];
        S::gemm(
            k,
            self.cout,
            n,
            S::one(),
            &self.w,
            1,
            k as isize,
            &dy.data,
            n as isize,
            1,
            S::zero(),
            &mut dcols,
            n as isize,
            1,
        );
        let (b, h, w) = input_dims;
        col2im(&dcols, self.cin, b, h, w)
    }
}

/// `(cin·9) × (B·H·W)` patch matrix; row `ci·9 + ky·3 + kx`.
fn im2col<S: Scalar>(x: &Act<S>) -> Vec<S> {
    let (h, w) = (x.h, x.w);
    let n = x.plane();
    let mut cols = vec![S::zero(); x.c * 9 * n];
    for ci in 0..x.c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                for b in 0..x.b {
                    let src = &x.data[(ci * x.b + b) * h * w..][..h * w];
                    for y in 0..h {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..][..w];
                        let dst = &mut row[(b * h + y) * w..][..w];
                        match kx {
                            0 => dst[1..].copy_from_slice(&src_row[..w - 1]),
                            1 => dst.copy_from_slice(src_row),
                            _ => dst[..w - 1].copy_from_slice(&src_row[1..]),
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<S: Scalar>(cols: &[S], c: usize, b: usize, h: usize, w: usize) -> Act<S> {
    let mut x = Act::zeros(c, b, h, w);
    let n = b * h * w;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * n..][..n];
                for bi in 0..b {
                    let dst = &mut x.data[(ci * b + bi) * h * w..][..h * w];
                    for y in 0..h {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * w..][..w];
                        let src = &row[(bi * h + y) * w..][..w];
                        match kx {
                            0 => {
                                for (d, &s) in dst_row[..w - 1].iter_mut().zip(&src[1..]) {
                                    *d += s;
                                }
                            }
                            1 => {
                                for (d, &s) in dst_row.iter_mut().zip(src) {
                                    *d += s;
                                }
                            }
                            _ => {
                                for (d, &s) in dst_row[1..].iter_mut().zip(&src[..w - 1]) {
                                    *d += s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Fully connected layer on `B × nin` row-major inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    pub nin: usize,
    pub nout: usize,
    /// `nout × nin`, row-major.
    pub w: Vec<S>,
    pub b: Vec<S>,
}

impl<S: Scalar> Dense<S> {
    pub fn new(nin: usize, nout: usize, gain: f64, rng: &mut RandomSource) -> Self {
        Self {
            nin,
            nout,
            w: gaussian_init(nout * nin, gain / (nin as f64).sqrt(), rng),
            b: vec![S::zero(); nout],
        }
    }

    pub fn zeros(nin: usize, nout: usize) -> Self {
        Self {
            nin,
            nout,
            w: vec![S::zero(); nout * nin],
            b: vec![S::zero(); nout],
        }
    }

    pub fn forward(&self, x: &[S], batch: usize) -> Vec<S> {
        assert_eq!(x.len(), batch * self.nin);
        let mut y = Vec::with_capacity(batch * self.nout);
        for xb in x.chunks_exact(self.nin) {
            for o in 0..self.nout {
                let row = &self.w[o * self.nin..][..self.nin];
                let dot: S = row.iter().zip(xb).map(|(&a, &b)| a * b).sum();
                y.push(dot + self.b[o]);
            }
        }
        y
    }

    /// Accumulates into `grad`; returns `dL/dx`.
    pub fn backward(&self, dy: &[S], x: &[S], grad: &mut Self) -> Vec<S> {
        let mut dx = vec![S::zero(); x.len()];
        for ((dyb, xb), dxb) in dy
            .chunks_exact(self.nout)
            .zip(x.chunks_exact(self.nin))
            .zip(dx.chunks_exact_mut(self.nin))
        {
            for o in 0..self.nout {
                let g = dyb[o];
                grad.b[o] += g;
                let wrow = &self.w[o * self.nin..][..self.nin];
                let grow = &mut grad.w[o * self.nin..][..self.nin];
                for i in 0..self.nin {
                    grow[i] += g * xb[i];
                    dxb[i] += g * wrow[i];
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(conv: &Conv3x3<f64>, x: &Act<f64>) -> Act<f64> {
        let mut y = Act::zeros(conv.cout, x.b, x.h, x.w);
        for co in 0..conv.cout {
            for b in 0..x.b {
                for yy in 0..x.h {
                    for xx in 0..x.w {
                        let mut acc = conv.b[co];
                        for ci in 0..conv.cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = yy as isize + ky as isize - 1;
                                    let ix = xx as isize + kx as isize - 1;
                                    if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                        continue;
                                    }
                                    let v = x.data[((ci * x.b + b) * x.h + iy as usize) * x.w + ix as usize];
                                    acc += conv.w[co * conv.cin * 9 + ci * 9 + ky * 3 + kx] * v;
                                }
                            }
                        }
                        y.data[((co * x.b + b) * x.h + yy) * x.w + xx] = acc;
                    }
                }
            }
        }
        y
    }

    fn sample_act(c: usize, b: usize, h: usize, w: usize, seed: u64) -> Act<f64> {
        let mut rng = RandomSource::new(seed);
        Act {
            c,
            b,
            h,
            w,
            data: (0..c * b * h * w).map(|_| rng.normal()).collect(),
        }
    }

    #[test]
    fn conv_matches_direct_summation() {
        let mut rng = RandomSource::new(1);
        let mut conv = Conv3x3::<f64>::new(3, 4, 1.0, &mut rng);
        conv.b = vec![0.1, -0.2, 0.3, 0.0];
        let x = sample_act(3, 2, 5, 6, 2);
        let (y, _) = conv.forward(&x);
        let expect = naive_conv(&conv, &x);
        for (a, b) in y.data.iter().zip(&expect.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let x = sample_act(2, 3, 4, 5, 3);
        let cols = im2col(&x);
        let mut rng = RandomSource::new(4);
        let r: Vec<f64> = (0..cols.len()).map(|_| rng.normal()).collect();
        let lhs: f64 = cols.iter().zip(&r).map(|(a, b)| a * b).sum();
        let back = col2im(&r, 2, 3, 4, 5);
        let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn silu_grad_matches_difference() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }
}
