//! Forward SDE families `dx = f(x, t) dt + g(t) dw` with affine drift.
//!
//! | kind  | f(x, t)      | g(t)²                         | mean coeff         | variance                 |
//! |-------|--------------|-------------------------------|--------------------|--------------------------|
//! | VE    | 0            | dσ²/dt                        | 1                  | σ²(t) − σ²(0)            |
//! | VP    | −½β(t)·x     | β(t)                          | exp(−½∫β)          | 1 − exp(−∫β)             |
//! | subVP | −½β(t)·x     | β(t)·(1 − exp(−2∫β))          | exp(−½∫β)          | (1 − exp(−∫β))²          |
//!
//! The variance column is the solution of the moment ODEs
//! `dμ/dt = E[f]`, `dΣ/dt = 2·E[f (x−μ)] + g²` started from `Σ(0) = 0`;
//! [`integrate_moment_odes`] integrates those ODEs numerically and serves as
//! the reference the closed forms are checked against.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::{ImageTensor, Shape};

/// Lower integration cutoff; keeps `std(t)` away from zero in score targets.
pub const DEFAULT_T_MIN: f64 = 1e-5;

fn check_unit(name: &'static str, t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: t,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// Noise levels: geometric σ(t) for VE, affine β(t) for VP/subVP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min: 0.01,
            sigma_max: 348.0,
            beta_min: 0.1,
            beta_max: 20.0,
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, beta_min: f64, beta_max: f64) -> Result<Self> {
        let s = Self {
            sigma_min,
            sigma_max,
            beta_min,
            beta_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma_min, self.sigma_max, self.beta_min, self.beta_max]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.sigma_min >= self.sigma_max || self.beta_min >= self.beta_max {
            return Err(Error::Config(format!(
                "noise schedule needs 0 < sigma_min < sigma_max and 0 < beta_min < beta_max, got {self:?}"
            )));
        }
        Ok(())
    }

    /// σ(t) = σ_min·(σ_max/σ_min)^t.
    pub fn sigma_of_t(&self, t: f64) -> Result<f64> {
        check_unit("t", t)?;
        Ok(self.sigma(t))
    }

    /// β(t) = β_min + (β_max − β_min)·t.
    pub fn beta_of_t(&self, t: f64) -> Result<f64> {
        check_unit("t", t)?;
        Ok(self.beta(t))
    }

    #[inline]
    pub(crate) fn sigma(&self, t: f64) -> f64 {
        self.sigma_min * (self.log_sigma_ratio() * t).exp()
    }

    #[inline]
    pub(crate) fn beta(&self, t: f64) -> f64 {
        self.beta_min + (self.beta_max - self.beta_min) * t
    }

    #[inline]
    pub(crate) fn log_sigma_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    /// ∫₀ᵗ β(s) ds for the affine schedule.
    #[inline]
    pub fn integrated_beta(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SdeKind {
    Ve,
    Vp,
    SubVp,
}

impl SdeKind {
    pub const ALL: [SdeKind; 3] = [SdeKind::Ve, SdeKind::Vp, SdeKind::SubVp];
}

impl fmt::Display for SdeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdeKind::Ve => "ve",
            SdeKind::Vp => "vp",
            SdeKind::SubVp => "subvp",
        })
    }
}

impl FromStr for SdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ve" => Ok(SdeKind::Ve),
            "vp" => Ok(SdeKind::Vp),
            "subvp" | "sub-vp" | "sub_vp" => Ok(SdeKind::SubVp),
            other => Err(Error::Config(format!("unknown SDE kind {other:?}"))),
        }
    }
}

/// Gaussian perturbation kernel `p(x_t | x_0) = N(mean_coeff·x_0, std²·I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalMoments {
    pub mean_coeff: f64,
    pub std: f64,
}

impl MarginalMoments {
    pub fn variance(&self) -> f64 {
        self.std * self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeModel {
    pub kind: SdeKind,
    pub schedule: NoiseSchedule,
    pub t_min: f64,
    pub t_max: f64,
}

impl SdeModel {
    pub fn new(kind: SdeKind, schedule: NoiseSchedule) -> Self {
        Self {
            kind,
            schedule,
            t_min: DEFAULT_T_MIN,
            t_max: 1.0,
        }
    }

    pub fn with_t_min(mut self, t_min: f64) -> Result<Self> {
        self.t_min = t_min;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < t_min < t_max <= 1, got t_min = {}, t_max = {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    fn check_t(&self, t: f64) -> Result<()> {
        // Grid arithmetic may land a few ulps outside the interval.
        let slack = 1e-12;
        if t >= self.t_min - slack && t <= self.t_max + slack {
            Ok(())
        } else {
            Err(Error::Domain {
                name: "t",
                value: t,
                lo: self.t_min,
                hi: self.t_max,
            })
        }
    }

    /// Coefficient `a(t)` with `f(x, t) = a(t)·x`.
    #[inline]
    pub(crate) fn drift_coeff(&self, t: f64) -> f64 {
        match self.kind {
            SdeKind::Ve => 0.0,
            SdeKind::Vp | SdeKind::SubVp => -0.5 * self.schedule.beta(t),
        }
    }

    #[inline]
    pub(crate) fn diffusion_sq(&self, t: f64) -> f64 {
        let s = &self.schedule;
        match self.kind {
            SdeKind::Ve => {
                let sigma = s.sigma(t);
                2.0 * sigma * sigma * s.log_sigma_ratio()
            }
            SdeKind::Vp => s.beta(t),
            SdeKind::SubVp => s.beta(t) * -(-2.0 * s.integrated_beta(t)).exp_m1(),
        }
    }

    #[inline]
    pub(crate) fn moments(&self, t: f64) -> MarginalMoments {
        let s = &self.schedule;
        match self.kind {
            SdeKind::Ve => {
                // σ²(t) − σ²(0) = σ_min²·(exp(2t·ln(σ_max/σ_min)) − 1)
                let var = s.sigma_min * s.sigma_min * (2.0 * t * s.log_sigma_ratio()).exp_m1();
                MarginalMoments {
                    mean_coeff: 1.0,
                    std: var.max(0.0).sqrt(),
                }
            }
            SdeKind::Vp => {
                let ib = s.integrated_beta(t);
                MarginalMoments {
                    mean_coeff: (-0.5 * ib).exp(),
                    std: (-(-ib).exp_m1()).sqrt(),
                }
            }
            SdeKind::SubVp => {
                let ib = s.integrated_beta(t);
                MarginalMoments {
                    mean_coeff: (-0.5 * ib).exp(),
                    std: -(-ib).exp_m1(),
                }
            }
        }
    }

    /// f(x, t), elementwise.
    pub fn drift(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        self.check_t(t)?;
        let a = self.drift_coeff(t) as f32;
        Ok(x.map(|v| a * v))
    }

    /// g(t).
    pub fn diffusion(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.diffusion_sq(t).sqrt())
    }

    /// Closed-form perturbation kernel moments at `t`.
    pub fn marginal_prob(&self, t: f64) -> Result<MarginalMoments> {
        self.check_t(t)?;
        Ok(self.moments(t))
    }

    /// Per-pixel standard deviation of the prior `p_T`.
    pub fn prior_std(&self) -> f64 {
        match self.kind {
            SdeKind::Ve => self.schedule.sigma_max,
            SdeKind::Vp | SdeKind::SubVp => 1.0,
        }
    }

    /// Draw `x_T ~ p_T`: N(0, σ_max²) for VE, N(0, 1) otherwise.
    pub fn prior_sample(&self, shape: Shape, rng: &mut RandomSource) -> ImageTensor {
        let mut x = ImageTensor::standard_normal(shape, rng);
        x.scale(self.prior_std() as f32);
        x
    }
}

/// Integrate the moment ODEs from `Σ(0) = 0`, `μ(0) = x(0)` to `t` with RK4.
///
/// State is `(mean_coeff, Σ, ∫β)`; the integrated rate is carried as its own
/// ODE component so this route shares no closed form with
/// [`SdeModel::marginal_prob`].
pub fn integrate_moment_odes(model: &SdeModel, t: f64, n_steps: usize) -> Result<MarginalMoments> {
    if n_steps < 100 {
        return Err(Error::Config(format!(
            "moment ODE integration needs at least 100 steps, got {n_steps}"
        )));
    }
    if !(0.0..=model.t_max).contains(&t) {
        return Err(Error::Domain {
            name: "t",
            value: t,
            lo: 0.0,
            hi: model.t_max,
        });
    }
    let s = model.schedule;
    let kind = model.kind;
    // d/dt of (m, Σ, I)
    let rhs = |tau: f64, st: [f64; 3]| -> [f64; 3] {
        let [m, var, ib] = st;
        let beta = s.beta(tau);
        match kind {
            SdeKind::Ve => {
                let sigma = s.sigma(tau);
                [0.0, 2.0 * sigma * sigma * s.log_sigma_ratio(), beta]
            }
            SdeKind::Vp => [-0.5 * beta * m, -beta * var + beta, beta],
            SdeKind::SubVp => {
                let g2 = beta * (1.0 - (-2.0 * ib).exp());
                [-0.5 * beta * m, -beta * var + g2, beta]
            }
        }
    };
    let h = t / n_steps as f64;
    let mut st = [1.0, 0.0, 0.0];
    let add = |a: [f64; 3], b: [f64; 3], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]];
    for i in 0..n_steps {
        let tau = i as f64 * h;
        let k1 = rhs(tau, st);
        let k2 = rhs(tau + 0.5 * h, add(st, k1, 0.5 * h));
        let k3 = rhs(tau + 0.5 * h, add(st, k2, 0.5 * h));
        let k4 = rhs(tau + h, add(st, k3, h));
        for j in 0..3 {
            st[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    Ok(MarginalMoments {
        mean_coeff: st[0],
        std: st[1].max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn model(kind: SdeKind) -> SdeModel {
        SdeModel::new(kind, NoiseSchedule::default())
    }

    #[test]
    fn sigma_schedule_values() {
        let s = NoiseSchedule::default();
        assert_relative_eq!(s.sigma_of_t(0.0).unwrap(), 0.01, max_relative = 1e-15);
        assert_relative_eq!(s.sigma_of_t(1.0).unwrap(), 348.0, max_relative = 1e-12);
        let mid = s.sigma_of_t(0.5).unwrap();
        assert_relative_eq!(mid, (0.01f64 * 348.0).sqrt(), max_relative = 1e-12);
        assert!((mid - 1.8655).abs() < 1e-4);
        assert!(s.sigma_of_t(1.5).is_err());
        assert!(s.sigma_of_t(-0.1).is_err());
    }

    #[test]
    fn beta_schedule_values() {
        let s = NoiseSchedule::default();
        assert_eq!(s.beta_of_t(0.0).unwrap(), 0.1);
        assert_eq!(s.beta_of_t(1.0).unwrap(), 20.0);
        assert_relative_eq!(s.beta_of_t(0.5).unwrap(), 10.05, max_relative = 1e-15);
        assert!(s.beta_of_t(1.01).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(NoiseSchedule::new(1.0, 0.5, 0.1, 20.0).is_err());
        assert!(NoiseSchedule::new(0.01, 348.0, 20.0, 0.1).is_err());
        assert!(NoiseSchedule::new(0.0, 348.0, 0.1, 20.0).is_err());
        assert!(SdeModel::new(SdeKind::Ve, NoiseSchedule::default())
            .with_t_min(0.0)
            .is_err());
    }

    #[test]
    fn drift_examples() {
        let ve = model(SdeKind::Ve);
        let x = ImageTensor::filled(Shape::new(2, 2, 1), 3.0);
        assert!(ve.drift(&x, 0.7).unwrap().as_slice().iter().all(|&v| v == 0.0));

        // t = 0 sits below the public cutoff; check the coefficient itself.
        let vp = model(SdeKind::Vp);
        assert_eq!(vp.drift_coeff(0.0) * 1.0, -0.05);
        let d = vp.drift(&ImageTensor::scalar(1.0), vp.t_min).unwrap();
        assert_relative_eq!(d.as_slice()[0], -0.05, max_relative = 1e-2);

        let sub = model(SdeKind::SubVp);
        let d = sub.drift(&ImageTensor::scalar(2.0), 1.0).unwrap();
        assert_relative_eq!(d.as_slice()[0], -20.0, max_relative = 1e-6);
        assert!(sub.drift(&x, 0.0).is_err());
    }

    #[test]
    fn diffusion_examples() {
        let vp = model(SdeKind::Vp);
        assert_relative_eq!(vp.diffusion(1.0).unwrap(), 20f64.sqrt(), max_relative = 1e-14);

        // VE: g(t) = σ(t)·sqrt(2 ln(σ_max/σ_min)) and equals sqrt(dσ²/dt)
        // by centered finite difference.
        let ve = model(SdeKind::Ve);
        let s = ve.schedule;
        for &t in &[0.1, 0.4, 0.9] {
            let g = ve.diffusion(t).unwrap();
            let expect = s.sigma(t) * (2.0 * (348.0f64 / 0.01).ln()).sqrt();
            assert_relative_eq!(g, expect, max_relative = 1e-12);
            let h = 1e-6;
            let fd = (s.sigma(t + h).powi(2) - s.sigma(t - h).powi(2)) / (2.0 * h);
            assert_relative_eq!(g * g, fd, max_relative = 1e-6);
        }

        // subVP: g → 0 as t → 0⁺, and never exceeds VP.
        let sub = model(SdeKind::SubVp).with_t_min(1e-10).unwrap();
        assert!(sub.diffusion(1e-10).unwrap() < 1e-5);
        assert!(sub.diffusion(1e-4).unwrap() > sub.diffusion(1e-8).unwrap());
        for i in 1..=10 {
            let t = i as f64 / 10.0;
            assert!(sub.diffusion(t).unwrap() <= vp.diffusion(t).unwrap());
        }
    }

    #[test]
    fn marginal_examples() {
        let vp = model(SdeKind::Vp);
        // ∫₀¹β by composite Simpson, independent of the closed form.
        let n = 1000;
        let h = 1.0 / n as f64;
        let simpson: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * vp.schedule.beta(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert_relative_eq!(simpson, 10.05, max_relative = 1e-12);
        let m = vp.marginal_prob(1.0).unwrap();
        assert_relative_eq!(m.mean_coeff, (-0.5 * simpson).exp(), max_relative = 1e-12);
        assert!((m.mean_coeff - 6.56e-3).abs() < 5e-5);

        let ve = model(SdeKind::Ve);
        let m = ve.marginal_prob(1.0).unwrap();
        assert_eq!(m.mean_coeff, 1.0);
        assert_relative_eq!(m.variance(), 348.0f64.powi(2) - 0.01f64.powi(2), max_relative = 1e-12);

        let sub = model(SdeKind::SubVp);
        for i in 1..=20 {
            let t = i as f64 / 20.0;
            let a = sub.marginal_prob(t).unwrap().std;
            let b = vp.marginal_prob(t).unwrap().std;
            assert_relative_eq!(a, b * b, max_relative = 1e-14);
        }
    }

    #[test]
    fn moment_ode_examples() {
        let ve = model(SdeKind::Ve);
        let ode = integrate_moment_odes(&ve, 0.5, 10_000).unwrap();
        let exact = ve.marginal_prob(0.5).unwrap();
        assert_relative_eq!(ode.std, exact.std, max_relative = 1e-3);

        let vp = model(SdeKind::Vp);
        let start = integrate_moment_odes(&vp, 0.0, 100).unwrap();
        assert_eq!(start.mean_coeff, 1.0);
        assert_eq!(start.std, 0.0);

        let sub = model(SdeKind::SubVp);
        let ode = integrate_moment_odes(&sub, 1.0, 10_000).unwrap();
        assert_relative_eq!(ode.std, sub.marginal_prob(1.0).unwrap().std, max_relative = 1e-3);

        assert!(integrate_moment_odes(&vp, 0.5, 50).is_err());
    }

    #[test]
    fn printed_vp_variance_exponent_fails_the_ode() {
        // A variance of 1 − exp(−½∫β) does not solve dΣ/dt = −βΣ + β.
        let vp = model(SdeKind::Vp);
        let t = 0.3;
        let ode = integrate_moment_odes(&vp, t, 10_000).unwrap();
        let half = 1.0 - (-0.5 * vp.schedule.integrated_beta(t)).exp();
        assert!((ode.variance() - half).abs() > 0.05);
        assert_relative_eq!(ode.variance(), vp.marginal_prob(t).unwrap().variance(), max_relative = 1e-8);
    }

    #[test]
    fn prior_sample_moments_and_determinism() {
        let shape = Shape::new(1, 100_000, 1);
        let vp = model(SdeKind::Vp);
        let x = vp.prior_sample(shape, &mut RandomSource::new(3));
        let std = (x.as_slice().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        assert!((std - 1.0).abs() < 0.02);

        let ve = model(SdeKind::Ve);
        let x = ve.prior_sample(shape, &mut RandomSource::new(4));
        let std = (x.as_slice().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        assert!((std / 348.0 - 1.0).abs() < 0.02);

        let a = ve.prior_sample(Shape::new(4, 4, 1), &mut RandomSource::new(11));
        let b = ve.prior_sample(Shape::new(4, 4, 1), &mut RandomSource::new(11));
        assert_eq!(a, b);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("VE".parse::<SdeKind>().unwrap(), SdeKind::Ve);
        assert_eq!("subvp".parse::<SdeKind>().unwrap(), SdeKind::SubVp);
        assert!("ddpm".parse::<SdeKind>().is_err());
        for k in SdeKind::ALL {
            assert_eq!(k.to_string().parse::<SdeKind>().unwrap(), k);
        }
    }
}
