//! Predictor-corrector sampling of the reverse-time SDE
//! `dx = [f(x, t) − g(t)²·∇ log p_t(x)] dt + g(t) dw̄`.
//!
//! The time grid has `N` uniform intervals on `[t_min, 1]`,
//! `τ_k = t_min + (1 − t_min)·k/N`. Step `i` (run for `i = N−1 … 0`) moves
//! the state from `τ_{i+1}` to `τ_i` with the predictor, then applies `M`
//! corrector steps at `τ_i`.

use std::fmt;
use std::str::FromStr;

use log::debug;

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::score::ScoreFunction;
use crate::sde::{SdeKind, SdeModel};
use crate::tensor::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    EulerMaruyama,
    ReverseDiffusion,
}

impl Predictor {
    /// Euler-Maruyama for VE, reverse diffusion for VP and subVP.
    pub fn default_for(kind: SdeKind) -> Self {
        match kind {
            SdeKind::Ve => Predictor::EulerMaruyama,
            SdeKind::Vp | SdeKind::SubVp => Predictor::ReverseDiffusion,
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Predictor::EulerMaruyama => "euler-maruyama",
            Predictor::ReverseDiffusion => "reverse-diffusion",
        })
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler-maruyama" | "euler_maruyama" | "em" => Ok(Predictor::EulerMaruyama),
            "reverse-diffusion" | "reverse_diffusion" | "rd" => Ok(Predictor::ReverseDiffusion),
            other => Err(Error::Config(format!("unknown predictor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corrector {
    Identity,
    Langevin,
}

impl fmt::Display for Corrector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corrector::Identity => "identity",
            Corrector::Langevin => "langevin",
        })
    }
}

impl FromStr for Corrector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(Corrector::Identity),
            "langevin" => Ok(Corrector::Langevin),
            other => Err(Error::Config(format!("unknown corrector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// N, number of reverse-time discretization steps.
    pub n_steps: usize,
    /// M, corrector steps per predictor step.
    pub m_corrector: usize,
    /// r, signal-to-noise ratio of the Langevin corrector.
    pub snr: f64,
    pub predictor: Predictor,
    pub corrector: Corrector,
    /// Replace the final state by its posterior mean (Tweedie step).
    pub denoise_final: bool,
}

impl SamplerConfig {
    /// Desk-scale image defaults for `kind`: N = 1000, no corrector.
    pub fn for_kind(kind: SdeKind) -> Self {
        Self {
            n_steps: 1000,
            m_corrector: 0,
            snr: 0.16,
            predictor: Predictor::default_for(kind),
            corrector: Corrector::Identity,
            denoise_final: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if self.corrector == Corrector::Langevin && !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }
}

/// Uniform grid with `n` intervals on `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub n: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl TimeGrid {
    pub fn new(model: &SdeModel, n: usize) -> Self {
        Self {
            n,
            t_min: model.t_min,
            t_max: model.t_max,
        }
    }

    /// τ_k for `k ∈ 0..=n`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n {
            return self.t_max;
        }
        self.t_min + (self.t_max - self.t_min) * k as f64 / self.n as f64
    }

    /// Signed reverse-time step (negative).
    pub fn dt(&self) -> f64 {
        -(self.t_max - self.t_min) / self.n as f64
    }
}

fn checked_score<S: ScoreFunction + ?Sized>(
    score: &S,
    x: &ImageTensor,
    y: &ImageTensor,
    t: f64,
) -> Result<ImageTensor> {
    let s = score.score(x, y, t)?;
    if s.shape() != x.shape() {
        return Err(Error::Shape(format!(
            "score returned {} for state {}",
            s.shape(),
            x.shape()
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite {
            what: "score",
            step: None,
            t,
        });
    }
    Ok(s)
}

/// One Euler-Maruyama step of the reverse SDE from `t` to `t + dt` (`dt < 0`):
/// `x' = x + [f(x, t) − g²·s]·dt + g·sqrt(|dt|)·z`.
pub fn euler_maruyama_step<S: ScoreFunction + ?Sized>(
    model: &SdeModel,
    score: &S,
    x: &ImageTensor,
    y: &ImageTensor,
    t: f64,
    dt: f64,
    rng: &mut RandomSource,
) -> Result<ImageTensor> {
    if dt >= 0.0 {
        return Err(Error::Config(format!("reverse step needs dt < 0, got {dt}")));
    }
    let g = model.diffusion(t)?;
    let a = model.drift_coeff(t);
    let s = checked_score(score, x, y, t)?;
    let noise_scale = g * (-dt).sqrt();
    let mut z = vec![0.0f32; x.len()];
    rng.fill_normal(&mut z);
    let mut out = x.clone();
    for ((o, &sv), &zv) in out.as_mut_slice().iter_mut().zip(s.as_slice()).zip(&z) {
        let xv = f64::from(*o);
        let drift = a * xv - g * g * f64::from(sv);
        *o = (xv + drift * dt + noise_scale * f64::from(zv)) as f32;
    }
    Ok(out)
}

/// Discrete forward coefficients for the step `τ_{i+1} → τ_i`:
/// `x_{i+1} = x_i + f_i(x_i) + G_i·z`, with `f_i(x) = a_i·x`.
///
/// * VE: `a_i = 0`, `G_i² = σ²(τ_{i+1}) − σ²(τ_i)`, the exact variance increment
///   of the forward kernel between the two grid times.
/// * VP: with `β_i = β(τ_{i+1})·Δτ`, the DDPM-style transition
///   `x_{i+1} = sqrt(1 − β_i)·x_i + sqrt(β_i)·z`, i.e. `a_i = sqrt(1 − β_i) − 1`, `G_i² = β_i`.
/// * subVP: same `a_i`, `G_i² = β_i·(1 − exp(−2∫₀^{τ_{i+1}} β))`.
fn discrete_coefficients(model: &SdeModel, grid: &TimeGrid, i: usize) -> (f64, f64) {
    let t_hi = grid.time(i + 1);
    match model.kind {
        SdeKind::Ve => {
            let hi = model.moments(t_hi).variance();
            let lo = model.moments(grid.time(i)).variance();
            (0.0, (hi - lo).max(0.0))
        }
        SdeKind::Vp | SdeKind::SubVp => {
            let beta_i = (model.schedule.beta(t_hi) * -grid.dt()).min(1.0);
            let a = (1.0 - beta_i).sqrt() - 1.0;
            let g2 = match model.kind {
                SdeKind::Vp => beta_i,
                _ => beta_i * -(-2.0 * model.schedule.integrated_beta(t_hi)).exp_m1(),
            };
            (a, g2)
        }
    }
}

/// Reverse-diffusion predictor for grid step `i ∈ [0, N−1]`:
/// `x' = x − [f_i(x) − G_i²·s(x, y, τ_{i+1})] + G_i·z`.
pub fn reverse_diffusion_step<S: ScoreFunction + ?Sized>(
    model: &SdeModel,
    score: &S,
    x: &ImageTensor,
    y: &ImageTensor,
    grid: &TimeGrid,
    i: usize,
    rng: &mut RandomSource,
) -> Result<ImageTensor> {
    if i >= grid.n {
        return Err(Error::Domain {
            name: "step index",
            value: i as f64,
            lo: 0.0,
            hi: (grid.n - 1) as f64,
        });
    }
    let t = grid.time(i + 1);
    let (a, g2) = discrete_coefficients(model, grid, i);
    let g = g2.sqrt();
    let s = checked_score(score, x, y, t)?;
    let mut z = vec![0.0f32; x.len()];
    rng.fill_normal(&mut z);
    let mut out = x.clone();
    for ((o, &sv), &zv) in out.as_mut_slice().iter_mut().zip(s.as_slice()).zip(&z) {
        let xv = f64::from(*o);
        let rev_f = a * xv - g2 * f64::from(sv);
        *o = (xv - rev_f + g * f64::from(zv)) as f32;
    }
    Ok(out)
}

/// Langevin step size `ε = 2α·(r·‖z‖ / ‖s‖)²`, with `α = 1` for VE and
/// `α = mean_coeff(t)²` for VP/subVP.
pub fn langevin_step_size(model: &SdeModel, t: f64, snr: f64, noise_norm: f64, score_norm: f64) -> f64 {
    let alpha = match model.kind {
        SdeKind::Ve => 1.0,
        SdeKind::Vp | SdeKind::SubVp => model.moments(t).mean_coeff.powi(2),
    };
    let ratio = snr * noise_norm / score_norm;
    2.0 * alpha * ratio * ratio
}

/// One Langevin MCMC correction at time `t`: `x' = x + ε·s + sqrt(2ε)·z`.
///
/// A zero score leaves `x` unchanged.
pub fn langevin_correct<S: ScoreFunction + ?Sized>(
    model: &SdeModel,
    score: &S,
    x: &ImageTensor,
    y: &ImageTensor,
    t: f64,
    snr: f64,
    rng: &mut RandomSource,
) -> Result<ImageTensor> {
    if !(snr > 0.0) {
        return Err(Error::Config(format!("snr must be positive, got {snr}")));
    }
    model.marginal_prob(t)?;
    let s = checked_score(score, x, y, t)?;
    let score_norm = s.norm_l2();
    if score_norm == 0.0 {
        debug!("langevin corrector: zero score at t = {t}, state left unchanged");
        return Ok(x.clone());
    }
    let mut z = ImageTensor::zeros(x.shape());
    rng.fill_normal(z.as_mut_slice());
    let eps = langevin_step_size(model, t, snr, z.norm_l2(), score_norm);
    let noise_scale = (2.0 * eps).sqrt();
    let mut out = x.clone();
    for ((o, &sv), &zv) in out.as_mut_slice().iter_mut().zip(s.as_slice()).zip(z.as_slice()) {
        *o = (f64::from(*o) + eps * f64::from(sv) + noise_scale * f64::from(zv)) as f32;
    }
    Ok(out)
}

/// Posterior mean `E[x_0 | x_t] = (x + std²·s) / mean_coeff`.
pub fn tweedie_denoise<S: ScoreFunction + ?Sized>(
    model: &SdeModel,
    score: &S,
    x: &ImageTensor,
    y: &ImageTensor,
    t: f64,
) -> Result<ImageTensor> {
    let mm = model.marginal_prob(t)?;
    let s = checked_score(score, x, y, t)?;
    let var = mm.variance();
    let mut out = x.clone();
    for (o, &sv) in out.as_mut_slice().iter_mut().zip(s.as_slice()) {
        *o = ((f64::from(*o) + var * f64::from(sv)) / mm.mean_coeff) as f32;
    }
    Ok(out)
}

/// Unclamped predictor-corrector chain; returns the state at `t_min`.
pub fn pc_sample_raw<S: ScoreFunction + ?Sized>(
    model: &SdeModel,
    score: &S,
    y: &ImageTensor,
    config: &SamplerConfig,
    rng: &mut RandomSource,
) -> Result<ImageTensor> {
    config.validate()?;
    model.validate()?;
    let grid = TimeGrid::new(model, config.n_steps);
    let mut x = model.prior_sample(y.shape(), rng);
    let corrector_steps = match config.corrector {
        Corrector::Identity => 0,
        Corrector::Langevin => config.m_corrector,
    };
    for i in (0..grid.n).rev() {
        let t_from = grid.time(i + 1);
        x = match config.predictor {
            Predictor::EulerMaruyama => {
                euler_maruyama_step(model, score, &x, y, t_from, grid.dt(), rng)
            }
            Predictor::ReverseDiffusion => reverse_diffusion_step(model, score, &x, y, &grid, i, rng),
        }
        .map_err(|e| e.at_step(i))?;
        let t = grid.time(i);
        for _ in 0..corrector_steps {
            x = langevin_correct(model, score, &x, y, t, config.snr, rng).map_err(|e| e.at_step(i))?;
        }
        if !x.is_finite() {
            return Err(Error::NonFinite {
                what: "state",
                step: Some(i),
                t,
            });
        }
    }
    if config.denoise_final {
        x = tweedie_denoise(model, score, &x, y, grid.time(0))?;
    }
    Ok(x)
}

/// Sample an SR image conditioned on `y` (already upsampled to the target
/// size); pixel values are clamped to `[0, 1]` once, at the end.
pub fn pc_sample<S: ScoreFunction + ?Sized>(
    model: &SdeModel,
    score: &S,
    y: &ImageTensor,
    config: &SamplerConfig,
    rng: &mut RandomSource,
) -> Result<ImageTensor> {
    let mut x = pc_sample_raw(model, score, y, config, rng)?;
    x.clamp01();
    Ok(x)
}
