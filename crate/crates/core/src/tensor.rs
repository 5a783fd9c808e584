use std::fmt;

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Height × width × channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub const fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

/// H×W×C image (or generic state) stored row-major with interleaved channels.
///
/// Pixel images live in `[0, 1]`; SDE states use the same carrier unclamped,
/// and scalar or vector test states are just `1×n×1` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} expects {} values, got {}",
                shape,
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for y in 0..shape.h {
            for x in 0..shape.w {
                for c in 0..shape.c {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { shape, data }
    }

    /// A `1×n×1` tensor holding `values`.
    pub fn from_vector(values: &[f32]) -> Self {
        Self {
            shape: Shape::new(1, values.len(), 1),
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self::from_vector(&[value])
    }

    pub fn standard_normal(shape: Shape, rng: &mut RandomSource) -> Self {
        let mut data = vec![0.0; shape.len()];
        rng.fill_normal(&mut data);
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.shape.w + x) * self.shape.c + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        let w = self.shape.w;
        let cc = self.shape.c;
        self.data[(y * w + x) * cc + c] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{} vs {}", self.shape, other.shape)));
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f32, other: &Self) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f32) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn norm_l2(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Average the channels into a single-channel image.
    pub fn to_gray(&self) -> Self {
        if self.shape.c == 1 {
            return self.clone();
        }
        let c = self.shape.c;
        let data = self
            .data
            .chunks_exact(c)
            .map(|px| px.iter().sum::<f32>() / c as f32)
            .collect();
        Self {
            shape: Shape::new(self.shape.h, self.shape.w, 1),
            data,
        }
    }

    /// Extract channel `c` as a single-channel image.
    pub fn channel(&self, c: usize) -> Self {
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.shape.c)
            .copied()
            .collect();
        Self {
            shape: Shape::new(self.shape.h, self.shape.w, 1),
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_hwc() {
        let t = ImageTensor::from_fn(Shape::new(2, 3, 2), |y, x, c| (y * 100 + x * 10 + c) as f32);
        assert_eq!(t.get(1, 2, 1), 121.0);
        assert_eq!(t.as_slice()[((1 * 3) + 2) * 2 + 1], 121.0);
        assert_eq!(t.channel(1).get(1, 2, 0), 121.0);
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(ImageTensor::new(Shape::new(2, 2, 1), vec![0.0; 3]).is_err());
    }

    #[test]
    fn axpy_checks_shape() {
        let mut a = ImageTensor::zeros(Shape::new(2, 2, 1));
        let b = ImageTensor::filled(Shape::new(2, 2, 1), 2.0);
        a.axpy(0.5, &b).unwrap();
        assert!(a.as_slice().iter().all(|&v| v == 1.0));
        assert!(a.axpy(1.0, &ImageTensor::zeros(Shape::new(1, 4, 1))).is_err());
    }
}
