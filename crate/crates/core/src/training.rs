//! Denoising score matching: degradation pipeline, loss, Adam with linear
//! warmup, and the training loop for [`DenoiserNet`].

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Act;
use crate::resample::{area_downsample_f64, resize_bicubic, resize_bicubic_f64};
use crate::rng::RandomSource;
use crate::score::{assemble_input, DenoiserNet, ScoreFunction};
use crate::sde::{NoiseSchedule, SdeKind, SdeModel, DEFAULT_T_MIN};
use crate::tensor::{ImageTensor, Shape};

/// Weighting `λ(t)` of the score-matching objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    /// `λ = std²`: the summand becomes `‖std·s + z‖²`.
    StdSquared,
    /// `λ = 1`: the summand is `‖s + z/std‖²`.
    Constant,
}

impl fmt::Display for LambdaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StdSquared => "std2",
            Self::Constant => "constant",
        })
    }
}

impl FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "std2" | "stdsquared" => Ok(Self::StdSquared),
            "constant" | "const" => Ok(Self::Constant),
            _ => Err(Error::Config(format!("unknown lambda mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownMethod {
    Area,
    Bicubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpMethod {
    Bicubic,
}

impl fmt::Display for DownMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Area => "area",
            Self::Bicubic => "bicubic",
        })
    }
}

impl FromStr for DownMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "area" => Ok(Self::Area),
            "bicubic" => Ok(Self::Bicubic),
            _ => Err(Error::Config(format!("unknown downsampling method {s:?}"))),
        }
    }
}

impl fmt::Display for UpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("bicubic")
    }
}

impl FromStr for UpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bicubic" => Ok(Self::Bicubic),
            _ => Err(Error::Config(format!("unknown upsampling method {s:?}"))),
        }
    }
}

/// How low-resolution inputs are produced from high-resolution images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegradationSpec {
    pub factor: usize,
    pub down_method: DownMethod,
    pub up_method: UpMethod,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            factor: 4,
            down_method: DownMethod::Area,
            up_method: UpMethod::Bicubic,
        }
    }
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.factor < 2 {
            return Err(Error::Config(format!("degradation factor must be ≥ 2, got {}", self.factor)));
        }
        Ok(())
    }

    /// High resolution to low resolution, unclamped.
    pub fn downsample(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let (shape, values) = self.downsample_f64(img)?;
        ImageTensor::new(shape, values.into_iter().map(|v| v as f32).collect())
    }

    /// [`Self::downsample`] in double precision, in `H × W × C` order.
    pub fn downsample_f64(&self, img: &ImageTensor) -> Result<(Shape, Vec<f64>)> {
        self.validate()?;
        let s = img.shape();
        if s.h % self.factor != 0 || s.w % self.factor != 0 {
            return Err(Error::Shape(format!("factor {} does not divide {s}", self.factor)));
        }
        let out = Shape::new(s.h / self.factor, s.w / self.factor, s.c);
        let values = match self.down_method {
            DownMethod::Area => area_downsample_f64(img, self.factor)?,
            DownMethod::Bicubic => resize_bicubic_f64(img, out.h, out.w)?,
        };
        Ok((out, values))
    }

    /// Low resolution back to high resolution, unclamped.
    pub fn upsample(&self, img: &ImageTensor) -> Result<ImageTensor> {
        self.validate()?;
        let s = img.shape();
        match self.up_method {
            UpMethod::Bicubic => resize_bicubic(img, s.h * self.factor, s.w * self.factor),
        }
    }
}

/// `(y_lr, y_up)`: the downsampled image and its upsampling back to the
/// original size, both clamped to `[0, 1]`.
pub fn degrade(x_hr: &ImageTensor, spec: &DegradationSpec) -> Result<(ImageTensor, ImageTensor)> {
    let mut lr = spec.downsample(x_hr)?;
    lr.clamp01();
    let mut up = spec.upsample(&lr)?;
    up.clamp01();
    Ok((lr, up))
}

/// One weighted score-matching term for a draw `x_t = m·x_0 + std·z`.
pub fn dsm_summand(score: &ImageTensor, z: &ImageTensor, std: f64, lambda: LambdaMode) -> f64 {
    score
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(&s, &zv)| {
            let (s, zv) = (f64::from(s), f64::from(zv));
            let r = match lambda {
                LambdaMode::StdSquared => std * s + zv,
                LambdaMode::Constant => s + zv / std,
            };
            r * r
        })
        .sum()
}

/// Monte-Carlo score-matching loss on a batch: `t ~ U[t_min, t_max]`,
/// `z ~ N(0, I)` per item; returns the batch mean of [`dsm_summand`].
pub fn dsm_loss<S: ScoreFunction + ?Sized>(
    score: &S,
    model: &SdeModel,
    x0: &[ImageTensor],
    y_up: &[ImageTensor],
    lambda: LambdaMode,
    rng: &mut RandomSource,
) -> Result<f64> {
    if x0.is_empty() {
        return Err(Error::Empty("score-matching batch"));
    }
    if x0.len() != y_up.len() {
        return Err(Error::Shape(format!("{} images but {} conditions", x0.len(), y_up.len())));
    }
    let mut total = 0.0;
    let mut ts = Vec::with_capacity(x0.len());
    for (x, y) in x0.iter().zip(y_up) {
        let t = rng.uniform(model.t_min, model.t_max);
        ts.push(t);
        let mm = model.marginal_prob(t)?;
        let z = ImageTensor::standard_normal(x.shape(), rng);
        let mut xt = x.map(|v| (f64::from(v) * mm.mean_coeff) as f32);
        xt.axpy(mm.std as f32, &z)?;
        let s = score.score(&xt, y, t)?;
        s.ensure_same_shape(&xt)?;
        total += dsm_summand(&s, &z, mm.std, lambda);
    }
    let loss = total / x0.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(ts));
    }
    Ok(loss)
}

/// Adam with bias correction; one moment buffer per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Vec<f32>>, grads: &[&[f32]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape("parameter and gradient sizes differ".into()));
            }
            for i in 0..p.len() {
                let gi = f64::from(g[i]);
                let mi = b1 * f64::from(m[i]) + (1.0 - b1) * gi;
                let vi = b2 * f64::from(v[i]) + (1.0 - b2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
                p[i] = (f64::from(p[i]) - update) as f32;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub lambda_mode: LambdaMode,
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub sde_kind: SdeKind,
    pub schedule: NoiseSchedule,
    /// Lower end of the training time range.
    pub t_min: f64,
    /// Loss is averaged and reported every `log_every` steps.
    pub log_every: usize,
    /// Checkpoint hook cadence; `None` disables periodic checkpoints.
    pub checkpoint_every: Option<usize>,
    pub degradation: DegradationSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 16,
            learning_rate: 2e-4,
            warmup_steps: 5000,
            lambda_mode: LambdaMode::StdSquared,
            grad_clip: Some(1.0),
            seed: 0,
            sde_kind: SdeKind::Ve,
            schedule: NoiseSchedule::default(),
            t_min: DEFAULT_T_MIN,
            log_every: 100,
            checkpoint_every: Some(5000),
            degradation: DegradationSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("steps must be ≥ 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("gradient clip must be positive, got {c}")));
            }
        }
        if self.log_every < 1 || self.checkpoint_every == Some(0) {
            return Err(Error::Config("logging and checkpoint intervals must be ≥ 1".into()));
        }
        self.model().validate()?;
        self.degradation.validate()
    }

    pub fn model(&self) -> SdeModel {
        SdeModel {
            t_min: self.t_min,
            ..SdeModel::new(self.sde_kind, self.schedule)
        }
    }

    /// Learning rate of update number `step` (1-based): linear ramp from 0
    /// reaching `learning_rate` at `warmup_steps`, constant afterwards.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            return self.learning_rate;
        }
        self.learning_rate * (step as f64 / self.warmup_steps as f64).min(1.0)
    }
}

/// Network plus optimizer state; `step` counts completed updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: DenoiserNet<f32>,
    pub adam: Adam,
    pub step: usize,
}

impl TrainState {
    pub fn new(net: DenoiserNet<f32>) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|(_, _, p)| p.len()).collect();
        Self {
            net,
            adam: Adam::new(&sizes),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    /// Mean per-step loss over the reporting window ending at `step`.
    pub loss: f64,
    pub lr: f64,
}

/// Callbacks invoked by [`train`]; all default to no-ops.
pub trait TrainHooks {
    fn on_log(&mut self, _record: &LossRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl TrainHooks for () {}

/// Precomputed `(x_hr, y_up)` training pairs.
pub struct TrainingPairs {
    pub hr: Vec<ImageTensor>,
    pub up: Vec<ImageTensor>,
}

impl TrainingPairs {
    pub fn new(images: &[ImageTensor], spec: &DegradationSpec) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let shape = images[0].shape();
        let mut up = Vec::with_capacity(images.len());
        for img in images {
            if img.shape() != shape {
                return Err(Error::Shape(format!("training images mix {} and {}", shape, img.shape())));
            }
            up.push(degrade(img, spec)?.1);
        }
        Ok(Self {
            hr: images.to_vec(),
            up,
        })
    }
}

const MEDIAN_WINDOW: usize = 256;
const MEDIAN_WARMUP: usize = 32;
const DIVERGENCE_RATIO: f64 = 1e3;

fn median(values: &VecDeque<f64>) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One score-matching update on a batch; returns the batch loss.
///
/// With `ε̂` the network output the weighted summand is `w(t)·‖z − ε̂‖²`
/// where `w = 1` for `λ = std²` and `w = 1/std²` for `λ = 1`.
pub fn train_step(
    config: &TrainConfig,
    model: &SdeModel,
    state: &mut TrainState,
    batch_hr: &[&ImageTensor],
    batch_up: &[&ImageTensor],
    rng: &mut RandomSource,
) -> Result<f64> {
    let b = batch_hr.len();
    let mut ts = Vec::with_capacity(b);
    let mut zs = Vec::with_capacity(b);
    let mut xts = Vec::with_capacity(b);
    for x in batch_hr {
        let t = rng.uniform(model.t_min, model.t_max);
        let mm = model.marginal_prob(t)?;
        let z = ImageTensor::standard_normal(x.shape(), rng);
        let mut xt = x.map(|v| (f64::from(v) * mm.mean_coeff) as f32);
        xt.axpy(mm.std as f32, &z)?;
        ts.push(t);
        zs.push(z);
        xts.push(xt);
    }
    let xrefs: Vec<&ImageTensor> = xts.iter().collect();
    let input: Act<f32> = assemble_input(model, &xrefs, batch_up, &ts)?;
    let (eps, cache) = state.net.forward_cached(&input, &ts)?;

    let plane = eps.h * eps.w;
    let c = eps.c;
    let mut dout = Act::zeros(eps.c, eps.b, eps.h, eps.w);
    let mut loss = 0.0f64;
    for bi in 0..b {
        let weight = match config.lambda_mode {
            LambdaMode::StdSquared => 1.0,
            LambdaMode::Constant => 1.0 / model.marginal_prob(ts[bi])?.variance(),
        };
        let z = zs[bi].as_slice();
        for ch in 0..c {
            let off = (ch * b + bi) * plane;
            for p in 0..plane {
                let r = f64::from(z[p * c + ch]) - f64::from(eps.data[off + p]);
                loss += weight * r * r;
                dout.data[off + p] = (-2.0 * weight * r / b as f64) as f32;
            }
        }
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(ts));
    }

    let grad = state.net.backward(&cache, &dout);
    let grads: Vec<Vec<f32>> = grad.params().into_iter().map(|(_, _, g)| g.to_vec()).collect();
    let mut grads = grads;
    if let Some(clip) = config.grad_clip {
        let norm = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm > clip {
            let s = (clip / norm) as f32;
            for g in &mut grads {
                for v in g.iter_mut() {
                    *v *= s;
                }
            }
        }
    }
    let lr = config.lr_at(state.step + 1);
    let grefs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
    state.adam.step(state.net.params_mut(), &grefs, lr)?;
    state.step += 1;
    if !state.net.all_finite() {
        return Err(Error::NonFinite {
            what: "weights",
            step: Some(state.step),
            t: f64::NAN,
        });
    }
    Ok(loss)
}

/// Run updates until `state.step == config.steps`.
///
/// Each update draws its batch, times and noise from a stream derived from
/// `(seed, step)`, so a resumed run continues exactly where it stopped.
pub fn train(
    config: &TrainConfig,
    data: &TrainingPairs,
    state: &mut TrainState,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<LossRecord>> {
    config.validate()?;
    if state.net.arch.image_channels != data.hr[0].shape().c {
        return Err(Error::Shape(format!(
            "network expects {} channels, data has {}",
            state.net.arch.image_channels,
            data.hr[0].shape().c
        )));
    }
    let model = config.model();
    let mut history: VecDeque<f64> = VecDeque::with_capacity(MEDIAN_WINDOW);
    let mut window_sum = 0.0;
    let mut window_len = 0usize;
    let mut records = Vec::new();
    while state.step < config.steps {
        let mut rng = RandomSource::derived(config.seed, state.step as u64);
        let idx: Vec<usize> = (0..config.batch_size).map(|_| rng.index(data.hr.len())).collect();
        let hr: Vec<&ImageTensor> = idx.iter().map(|&i| &data.hr[i]).collect();
        let up: Vec<&ImageTensor> = idx.iter().map(|&i| &data.up[i]).collect();
        let loss = train_step(config, &model, state, &hr, &up, &mut rng)?;
        if history.len() >= MEDIAN_WARMUP {
            let med = median(&history);
            if loss > DIVERGENCE_RATIO * med {
                return Err(Error::Diverged {
                    step: state.step,
                    loss,
                    median: med,
                });
            }
        }
        if history.len() == MEDIAN_WINDOW {
            history.pop_front();
        }
        history.push_back(loss);
        window_sum += loss;
        window_len += 1;
        if state.step % config.log_every == 0 {
            let rec = LossRecord {
                step: state.step,
                loss: window_sum / window_len as f64,
                lr: config.lr_at(state.step),
            };
            log::debug!("step {} loss {:.4} lr {:.3e}", rec.step, rec.loss, rec.lr);
            hooks.on_log(&rec)?;
            records.push(rec);
            window_sum = 0.0;
            window_len = 0;
        }
        if config.checkpoint_every.is_some_and(|k| state.step % k == 0) {
            hooks.on_checkpoint(state)?;
        }
    }
    Ok(records)
}

/// Score family `s(x, t) = (α_t·c_in(t)·x + β_t) / std(t)` with one
/// `(α, β)` pair per training time. It contains the exact score of 1D
/// Gaussian data at those times, so score matching must recover it.
#[derive(Debug, Clone)]
pub struct LinearScoreModel {
    pub model: SdeModel,
    pub times: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LinearScoreModel {
    pub fn new(model: SdeModel, times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty("training times"));
        }
        for &t in &times {
            model.marginal_prob(t)?;
        }
        let n = times.len();
        Ok(Self {
            model,
            times,
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
        })
    }

    fn slot(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12)
            .ok_or_else(|| Error::Config(format!("t = {t} is not a training time of the linear model")))
    }

    /// `(slope, intercept)` of `s(x) = slope·x + intercept` at training time `t`.
    pub fn coefficients(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.slot(t)?;
        let mm = self.model.marginal_prob(t)?;
        let c_in = crate::score::input_scale(&self.model, t)?;
        Ok((self.alpha[k] * c_in / mm.std, self.beta[k] / mm.std))
    }

    /// Minimize the `λ = std²` objective on samples of `N(mean, variance)`
    /// with Adam; the learning rate decays linearly to zero.
    pub fn fit(&mut self, mean: f64, variance: f64, steps: usize, batch: usize, lr: f64, seed: u64) -> Result<()> {
        if steps == 0 || batch == 0 {
            return Err(Error::Config("steps and batch must be positive".into()));
        }
        let mut rng = RandomSource::new(seed);
        let n = self.times.len();
        let mut adam = Adam::new(&[n, n]);
        let mut alpha: Vec<f32> = self.alpha.iter().map(|&v| v as f32).collect();
        let mut beta: Vec<f32> = self.beta.iter().map(|&v| v as f32).collect();
        let sd = variance.sqrt();
        let coeffs: Vec<(f64, f64, f64)> = self
            .times
            .iter()
            .map(|&t| {
                let mm = self.model.marginal_prob(t)?;
                Ok((mm.mean_coeff, mm.std, crate::score::input_scale(&self.model, t)?))
            })
            .collect::<Result<_>>()?;
        for step in 0..steps {
            let mut ga = vec![0.0f64; n];
            let mut gb = vec![0.0f64; n];
            for _ in 0..batch {
                let k = rng.index(n);
                let (m, std, c_in) = coeffs[k];
                let x0 = mean + sd * rng.normal();
                let z = rng.normal();
                let u = c_in * (m * x0 + std * z);
                let r = f64::from(alpha[k]) * u + f64::from(beta[k]) + z;
                ga[k] += 2.0 * r * u / batch as f64;
                gb[k] += 2.0 * r / batch as f64;
            }
            let ga: Vec<f32> = ga.iter().map(|&v| v as f32).collect();
            let gb: Vec<f32> = gb.iter().map(|&v| v as f32).collect();
            let rate = lr * (1.0 - step as f64 / steps as f64);
            adam.step(vec![&mut alpha, &mut beta], &[&ga, &gb], rate)?;
        }
        self.alpha = alpha.iter().map(|&v| f64::from(v)).collect();
        self.beta = beta.iter().map(|&v| f64::from(v)).collect();
        Ok(())
    }
}

impl ScoreFunction for LinearScoreModel {
    fn score(&self, x: &ImageTensor, _y: &ImageTensor, t: f64) -> Result<ImageTensor> {
        let (a, b) = self.coefficients(t)?;
        Ok(x.map(|v| (a * f64::from(v) + b) as f32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::ArchDescriptor;
    use crate::tensor::Shape;

    struct Zero;

    impl ScoreFunction for Zero {
        fn score(&self, x: &ImageTensor, _y: &ImageTensor, _t: f64) -> Result<ImageTensor> {
            Ok(ImageTensor::zeros(x.shape()))
        }
    }

    #[test]
    fn degrade_shapes_and_constants() {
        let img = ImageTensor::filled(Shape::new(32, 32, 1), 0.3);
        for down in [DownMethod::Area, DownMethod::Bicubic] {
            let spec = DegradationSpec {
                down_method: down,
                ..DegradationSpec::default()
            };
            let (lr, up) = degrade(&img, &spec).unwrap();
            assert_eq!(lr.shape(), Shape::new(8, 8, 1));
            assert_eq!(up.shape(), Shape::new(32, 32, 1));
            assert!(lr.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-6));
            assert!(up.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        }
        let bad = ImageTensor::zeros(Shape::new(30, 32, 1));
        assert!(degrade(&bad, &DegradationSpec::default()).is_err());
    }

    #[test]
    fn degrade_removes_nyquist_checkerboard() {
        let img = ImageTensor::from_fn(Shape::new(32, 32, 1), |y, x, _| ((x + y) % 2) as f32);
        let (_, up) = degrade(&img, &DegradationSpec::default()).unwrap();
        let before = crate::metrics::high_frequency_energy(&img);
        let after = crate::metrics::high_frequency_energy(&up);
        assert!(after < before);
        assert!(up.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_score_loss_is_pixel_count() {
        let model = SdeModel::new(SdeKind::Vp, NoiseSchedule::default());
        let x0 = vec![ImageTensor::filled(Shape::new(4, 4, 1), 0.5); 2000];
        let loss = dsm_loss(&Zero, &model, &x0, &x0, LambdaMode::StdSquared, &mut RandomSource::new(3)).unwrap();
        // E‖z‖² = 16, sd of the mean = sqrt(32 / 2000).
        assert!((loss - 16.0).abs() < 5.0 * (32.0f64 / 2000.0).sqrt(), "{loss}");
        assert!(dsm_loss(&Zero, &model, &[], &[], LambdaMode::StdSquared, &mut RandomSource::new(3)).is_err());
    }

    #[test]
    fn exact_target_gives_zero_loss() {
        let mut rng = RandomSource::new(5);
        let z = ImageTensor::standard_normal(Shape::new(3, 3, 1), &mut rng);
        let std = 0.7;
        let s = z.map(|v| (-f64::from(v) / std) as f32);
        assert!(dsm_summand(&s, &z, std, LambdaMode::StdSquared) < 1e-10);
        assert!(dsm_summand(&s, &z, std, LambdaMode::Constant) < 1e-10);
    }

    #[test]
    fn warmup_is_linear() {
        let cfg = TrainConfig::default();
        assert!((cfg.lr_at(2500) - 1e-4).abs() < 1e-18);
        assert_eq!(cfg.lr_at(5000), 2e-4);
        assert_eq!(cfg.lr_at(9000), 2e-4);
        let none = TrainConfig {
            warmup_steps: 0,
            ..TrainConfig::default()
        };
        assert_eq!(none.lr_at(1), 2e-4);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { steps: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { grad_clip: Some(0.0), ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(&[2]);
        let mut p = vec![1.0f32, -1.0];
        adam.step(vec![&mut p], &[&[0.5, -3.0]], 0.1).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    fn tiny_setup(steps: usize) -> (TrainConfig, TrainingPairs, TrainState) {
        let cfg = TrainConfig {
            steps,
            batch_size: 2,
            warmup_steps: 2,
            learning_rate: 1e-3,
            log_every: 1,
            checkpoint_every: Some(2),
            ..TrainConfig::default()
        };
        let images: Vec<ImageTensor> = (0..4)
            .map(|i| ImageTensor::from_fn(Shape::new(8, 8, 1), |y, x, _| ((x * y + i) % 5) as f32 / 5.0))
            .collect();
        let pairs = TrainingPairs::new(&images, &cfg.degradation).unwrap();
        let arch = ArchDescriptor {
            image_channels: 1,
            widths: vec![4, 8],
            time_dim: 4,
            time_hidden: 8,
        };
        (cfg, pairs, TrainState::new(DenoiserNet::new(arch, 1).unwrap()))
    }

    #[test]
    fn single_step_applies_one_update() {
        let (cfg, pairs, mut state) = tiny_setup(1);
        let before = state.net.clone();
        let recs = train(&cfg, &pairs, &mut state, &mut ()).unwrap();
        assert_eq!(state.step, 1);
        assert_eq!(state.adam.t, 1);
        assert_eq!(recs.len(), 1);
        assert_ne!(before, state.net);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (cfg, pairs, mut a) = tiny_setup(6);
        let full = train(&cfg, &pairs, &mut a, &mut ()).unwrap();
        let (_, _, mut b) = tiny_setup(6);
        let half = TrainConfig { steps: 3, ..cfg.clone() };
        let mut first = train(&half, &pairs, &mut b, &mut ()).unwrap();
        first.extend(train(&cfg, &pairs, &mut b, &mut ()).unwrap());
        assert_eq!(a, b);
        assert_eq!(full, first);
    }

    #[test]
    fn checkpoint_hook_cadence() {
        struct Count(usize, usize);
        impl TrainHooks for Count {
            fn on_log(&mut self, _r: &LossRecord) -> Result<()> {
                self.0 += 1;
                Ok(())
            }
            fn on_checkpoint(&mut self, _s: &TrainState) -> Result<()> {
                self.1 += 1;
                Ok(())
            }
        }
        let (cfg, pairs, mut state) = tiny_setup(5);
        let mut c = Count(0, 0);
        train(&cfg, &pairs, &mut state, &mut c).unwrap();
        assert_eq!((c.0, c.1), (5, 2));
    }

    #[test]
    fn linear_model_reports_untrained_times() {
        let model = SdeModel::new(SdeKind::Vp, NoiseSchedule::default());
        let lin = LinearScoreModel::new(model, vec![0.2]).unwrap();
        assert!(lin.coefficients(0.3).is_err());
        assert_eq!(lin.coefficients(0.2).unwrap(), (0.0, 0.0));
    }
}
