use crate::error::{Error, Result};
use crate::sde::SdeModel;
use crate::tensor::ImageTensor;

use super::ScoreFunction;

/// Isotropic Gaussian data `N(mean, variance·I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDataSpec {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GaussianDataSpec {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Config(format!("variance must be positive, got {variance}")));
        }
        if mean.is_empty() {
            return Err(Error::Empty("gaussian mean"));
        }
        Ok(Self { mean, variance })
    }

    /// Mean and variance of the perturbed marginal `p_t` for coordinate `i`.
    pub fn marginal(&self, model: &SdeModel, i: usize, t: f64) -> Result<(f64, f64)> {
        let m = model.marginal_prob(t)?;
        Ok((
            m.mean_coeff * self.mean[i],
            m.mean_coeff * m.mean_coeff * self.variance + m.variance(),
        ))
    }
}

/// Exact score of the perturbed marginal when the data are Gaussian:
/// `x_t ~ N(m·μ, (m²·v + std²)·I)`, so `∇ log p_t = −(x − m·μ) / (m²·v + std²)`.
///
/// The condition `y` is ignored.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianScore {
    pub spec: GaussianDataSpec,
    pub model: SdeModel,
}

impl AnalyticGaussianScore {
    pub fn new(spec: GaussianDataSpec, model: SdeModel) -> Self {
        Self { spec, model }
    }
}

impl ScoreFunction for AnalyticGaussianScore {
    fn score(&self, x: &ImageTensor, _y: &ImageTensor, t: f64) -> Result<ImageTensor> {
        let n = self.spec.mean.len();
        if n != 1 && n != x.len() {
            return Err(Error::Shape(format!(
                "gaussian mean has {} entries, state has {}",
                n,
                x.len()
            )));
        }
        let mm = self.model.marginal_prob(t)?;
        let m = mm.mean_coeff;
        let var = m * m * self.spec.variance + mm.variance();
        let mut out = x.clone();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let mu = self.spec.mean[if n == 1 { 0 } else { i }];
            *v = (-(f64::from(*v) - m * mu) / var) as f32;
        }
        Ok(out)
    }
}
