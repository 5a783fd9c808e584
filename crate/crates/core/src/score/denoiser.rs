//! Conditional denoiser: a small encoder-decoder with skip connections that
//! takes the noisy state concatenated with the upsampled low-resolution
//! guide and predicts the scaled noise `ε̂`. The score is `−ε̂ / std(t)`.
//!
//! Layout for widths `[w₀, w₁, …]`:
//!
//! ```text
//! [c_in·x ; y] → conv_in → res₀ ─────────────────────────────┐ skip
//!                           └ pool → down₁ → res₁ → … ─ up → [·; skip] → conv_up₀ → dec₀ → SiLU → conv_out → ε̂
//! ```
//!
//! Every residual block adds a learned affine projection of the time
//! embedding after its first convolution. `conv_out` starts at zero, so an
//! untrained network outputs `ε̂ ≡ 0`.

use crate::error::{Error, Result};
use crate::nn::{silu, silu_grad, Act, Conv3x3, Dense, Scalar};
use crate::rng::RandomSource;
use crate::sde::SdeModel;
use crate::tensor::ImageTensor;

use super::ScoreFunction;

/// Sinusoidal features `[sin(ω₀t), cos(ω₀t), sin(ω₁t), cos(ω₁t), …]` with
/// frequencies spaced geometrically from 1 to 1000 rad per unit time.
pub fn time_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("time embedding dim must be even and positive, got {dim}")));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let omega = if half == 1 {
            1.0
        } else {
            1000f64.powf(k as f64 / (half - 1) as f64)
        };
        out.push((omega * t).sin());
        out.push((omega * t).cos());
    }
    Ok(out)
}

/// Network shape; stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchDescriptor {
    /// Channels of the image (the network input has twice as many).
    pub image_channels: usize,
    /// Feature width per resolution level; one 2× downsampling between levels.
    pub widths: Vec<usize>,
    pub time_dim: usize,
    pub time_hidden: usize,
}

impl Default for ArchDescriptor {
    fn default() -> Self {
        Self {
            image_channels: 1,
            widths: vec![32, 64],
            time_dim: 16,
            time_hidden: 64,
        }
    }
}

impl ArchDescriptor {
    pub fn levels(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_channels == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!("invalid architecture {self:?}")));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 || self.time_hidden == 0 {
            return Err(Error::Config(format!("invalid time embedding sizes in {self:?}")));
        }
        Ok(())
    }

    /// Height and width must survive `levels − 1` halvings.
    pub fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        let f = 1 << (self.levels() - 1);
        if h % f != 0 || w % f != 0 || h < f || w < f {
            return Err(Error::Shape(format!(
                "{h}x{w} is not divisible by {f} for a {}-level network",
                self.levels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<S> {
    pub conv1: Conv3x3<S>,
    pub conv2: Conv3x3<S>,
    pub temb: Dense<S>,
}

struct ResCache<S> {
    h: Act<S>,
    c1: Act<S>,
    cols1: Vec<S>,
    cols2: Vec<S>,
}

impl<S: Scalar> ResBlock<S> {
    fn new(width: usize, time_hidden: usize, rng: &mut RandomSource) -> Self {
        Self {
            conv1: Conv3x3::new(width, width, 1.0, rng),
            conv2: Conv3x3::new(width, width, 0.5, rng),
            temb: Dense::new(time_hidden, width, 1.0, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            conv1: Conv3x3::zeros(self.conv1.cin, self.conv1.cout),
            conv2: Conv3x3::zeros(self.conv2.cin, self.conv2.cout),
            temb: Dense::zeros(self.temb.nin, self.temb.nout),
        }
    }

    fn forward(&self, h: Act<S>, temb: &[S]) -> (Act<S>, ResCache<S>) {
        let a0 = h.map(silu);
        let (mut c1, cols1) = self.conv1.forward(&a0);
        let e = self.temb.forward(temb, h.b);
        let plane = h.h * h.w;
        for c in 0..c1.c {
            for b in 0..c1.b {
                let shift = e[b * c1.c + c];
                for v in &mut c1.data[(c * c1.b + b) * plane..][..plane] {
                    *v += shift;
                }
            }
        }
        let a1 = c1.map(silu);
        let (mut out, cols2) = self.conv2.forward(&a1);
        out.add_assign(&h);
        (out, ResCache { h, c1, cols1, cols2 })
    }

    /// Returns `(dL/dh, dL/dtemb)`.
    fn backward(&self, dout: &Act<S>, cache: &ResCache<S>, temb: &[S], grad: &mut Self) -> (Act<S>, Vec<S>) {
        let dims = (dout.b, dout.h, dout.w);
        let da1 = self.conv2.backward(dout, &cache.cols2, &mut grad.conv2, dims);
        let mut dc1 = da1;
        for (d, &c) in dc1.data.iter_mut().zip(&cache.c1.data) {
            *d *= silu_grad(c);
        }
        let plane = dout.h * dout.w;
        let mut de = vec![S::zero(); dout.b * dc1.c];
        for c in 0..dc1.c {
            for b in 0..dc1.b {
                de[b * dc1.c + c] = dc1.data[(c * dc1.b + b) * plane..][..plane].iter().copied().sum();
            }
        }
        let dtemb = self.temb.backward(&de, temb, &mut grad.temb);
        let da0 = self.conv1.backward(&dc1, &cache.cols1, &mut grad.conv1, dims);
        let mut dh = dout.clone();
        for ((d, &g), &x) in dh.data.iter_mut().zip(&da0.data).zip(&cache.h.data) {
            *d += g * silu_grad(x);
        }
        (dh, dtemb)
    }
}

/// Cached intermediates of a training forward pass.
pub struct ForwardCache<S> {
    ts_embed: Vec<S>,
    tpre: Vec<S>,
    temb: Vec<S>,
    cols_in: Vec<S>,
    in_dims: (usize, usize, usize),
    enc: Vec<ResCache<S>>,
    skip_widths: Vec<usize>,
    down_cols: Vec<Vec<S>>,
    level_dims: Vec<(usize, usize)>,
    up_cols: Vec<Vec<S>>,
    dec: Vec<ResCache<S>>,
    final_h: Act<S>,
    cols_out: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet<S = f32> {
    pub arch: ArchDescriptor,
    pub time_dense: Dense<S>,
    pub conv_in: Conv3x3<S>,
    pub enc: Vec<ResBlock<S>>,
    /// `down[l − 1]` maps level `l − 1` features to level `l`.
    pub down: Vec<Conv3x3<S>>,
    /// `up[l]` maps `[upsampled level l+1 ; skip l]` to level `l`.
    pub up: Vec<Conv3x3<S>>,
    pub dec: Vec<ResBlock<S>>,
    pub conv_out: Conv3x3<S>,
}

impl<S: Scalar> DenoiserNet<S> {
    pub fn new(arch: ArchDescriptor, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = RandomSource::new(seed);
        let w = arch.widths.clone();
        let levels = w.len();
        let c = arch.image_channels;
        let time_dense = Dense::new(arch.time_dim, arch.time_hidden, 1.0, &mut rng);
        let conv_in = Conv3x3::new(2 * c, w[0], 1.0, &mut rng);
        let enc = (0..levels).map(|l| ResBlock::new(w[l], arch.time_hidden, &mut rng)).collect();
        let down = (1..levels).map(|l| Conv3x3::new(w[l - 1], w[l], 1.0, &mut rng)).collect();
        let up = (0..levels - 1)
            .map(|l| Conv3x3::new(w[l + 1] + w[l], w[l], 1.0, &mut rng))
            .collect();
        let dec = (0..levels - 1).map(|l| ResBlock::new(w[l], arch.time_hidden, &mut rng)).collect();
        let conv_out = Conv3x3::zeros(w[0], c);
        Ok(Self {
            arch,
            time_dense,
            conv_in,
            enc,
            down,
            up,
            dec,
            conv_out,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            time_dense: Dense::zeros(self.time_dense.nin, self.time_dense.nout),
            conv_in: Conv3x3::zeros(self.conv_in.cin, self.conv_in.cout),
            enc: self.enc.iter().map(ResBlock::zeros_like).collect(),
            down: self.down.iter().map(|c| Conv3x3::zeros(c.cin, c.cout)).collect(),
            up: self.up.iter().map(|c| Conv3x3::zeros(c.cin, c.cout)).collect(),
            dec: self.dec.iter().map(ResBlock::zeros_like).collect(),
            conv_out: Conv3x3::zeros(self.conv_out.cin, self.conv_out.cout),
        }
    }

    /// Parameter arrays in a fixed order with their names and dimensions.
    pub fn params(&self) -> Vec<(String, Vec<usize>, &[S])> {
        type Entry<'a, S> = (String, Vec<usize>, &'a [S]);
        fn conv<'a, S>(out: &mut Vec<Entry<'a, S>>, name: String, c: &'a Conv3x3<S>) {
            out.push((format!("{name}.w"), vec![c.cout, c.cin, 3, 3], c.w.as_slice()));
            out.push((format!("{name}.b"), vec![c.cout], c.b.as_slice()));
        }
        fn dense<'a, S>(out: &mut Vec<Entry<'a, S>>, name: String, d: &'a Dense<S>) {
            out.push((format!("{name}.w"), vec![d.nout, d.nin], d.w.as_slice()));
            out.push((format!("{name}.b"), vec![d.nout], d.b.as_slice()));
        }
        let mut out = Vec::new();
        dense(&mut out, "time".into(), &self.time_dense);
        conv(&mut out, "conv_in".into(), &self.conv_in);
        for (l, r) in self.enc.iter().enumerate() {
            conv(&mut out, format!("enc{l}.conv1"), &r.conv1);
            conv(&mut out, format!("enc{l}.conv2"), &r.conv2);
            dense(&mut out, format!("enc{l}.temb"), &r.temb);
        }
        for (i, c) in self.down.iter().enumerate() {
            conv(&mut out, format!("down{}", i + 1), c);
        }
        for (l, c) in self.up.iter().enumerate() {
            conv(&mut out, format!("up{l}"), c);
        }
        for (l, r) in self.dec.iter().enumerate() {
            conv(&mut out, format!("dec{l}.conv1"), &r.conv1);
            conv(&mut out, format!("dec{l}.conv2"), &r.conv2);
            dense(&mut out, format!("dec{l}.temb"), &r.temb);
        }
        conv(&mut out, "conv_out".into(), &self.conv_out);
        out
    }

    /// Mutable parameter arrays in the same order as [`DenoiserNet::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Vec<S>> {
        let mut out: Vec<&mut Vec<S>> = Vec::new();
        out.push(&mut self.time_dense.w);
        out.push(&mut self.time_dense.b);
        out.push(&mut self.conv_in.w);
        out.push(&mut self.conv_in.b);
        for r in &mut self.enc {
            out.extend([&mut r.conv1.w, &mut r.conv1.b, &mut r.conv2.w, &mut r.conv2.b, &mut r.temb.w, &mut r.temb.b]);
        }
        for c in &mut self.down {
            out.extend([&mut c.w, &mut c.b]);
        }
        for c in &mut self.up {
            out.extend([&mut c.w, &mut c.b]);
        }
        for r in &mut self.dec {
            out.extend([&mut r.conv1.w, &mut r.conv1.b, &mut r.conv2.w, &mut r.conv2.b, &mut r.temb.w, &mut r.temb.b]);
        }
        out.push(&mut self.conv_out.w);
        out.push(&mut self.conv_out.b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, _, p)| p.len()).sum()
    }

    /// Same network with every parameter converted to another float type.
    pub fn cast<T: Scalar>(&self) -> DenoiserNet<T> {
        let mut out = DenoiserNet::<T>::new(self.arch.clone(), 0).expect("validated architecture");
        for (dst, (_, _, src)) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.iter().map(|v| T::of(v.f64())).collect();
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|(_, _, p)| p.iter().all(|v| v.is_finite()))
    }

    /// Raw `ε̂` for a batch; `input` is `[c_in·x ; y]`, `ts` one time per item.
    pub fn forward(&self, input: &Act<S>, ts: &[f64]) -> Result<Act<S>> {
        Ok(self.forward_cached(input, ts)?.0)
    }

    pub fn forward_cached(&self, input: &Act<S>, ts: &[f64]) -> Result<(Act<S>, ForwardCache<S>)> {
        let c = self.arch.image_channels;
        if input.c != 2 * c || input.b != ts.len() {
            return Err(Error::Shape(format!(
                "network expects {} input channels and {} times, got {} channels and batch {}",
                2 * c,
                ts.len(),
                input.c,
                input.b
            )));
        }
        self.arch.check_spatial(input.h, input.w)?;
        let b = input.b;
        let mut ts_embed = Vec::with_capacity(b * self.arch.time_dim);
        for &t in ts {
            ts_embed.extend(time_embedding(t, self.arch.time_dim)?.into_iter().map(S::of));
        }
        let tpre = self.time_dense.forward(&ts_embed, b);
        let temb: Vec<S> = tpre.iter().map(|&v| silu(v)).collect();

        let (mut h, cols_in) = self.conv_in.forward(input);
        let levels = self.arch.levels();
        let mut enc = Vec::with_capacity(levels);
        let mut skips = Vec::with_capacity(levels);
        let mut down_cols = Vec::new();
        let mut level_dims = vec![(input.h, input.w)];
        for l in 0..levels {
            if l > 0 {
                let pooled = h.avg_pool2();
                level_dims.push((pooled.h, pooled.w));
                let (next, cols) = self.down[l - 1].forward(&pooled);
                down_cols.push(cols);
                h = next;
            }
            let (out, cache) = self.enc[l].forward(h, &temb);
            enc.push(cache);
            skips.push(out.clone());
            h = out;
        }
        let skip_widths: Vec<usize> = skips.iter().map(|s| s.c).collect();
        let mut up_cols = vec![Vec::new(); levels - 1];
        let mut dec_caches: Vec<Option<ResCache<S>>> = (0..levels - 1).map(|_| None).collect();
        for l in (0..levels - 1).rev() {
            let cat = h.upsample2().concat(&skips[l]);
            let (u, cols) = self.up[l].forward(&cat);
            up_cols[l] = cols;
            let (out, cache) = self.dec[l].forward(u, &temb);
            dec_caches[l] = Some(cache);
            h = out;
        }
        let (out, cols_out) = self.conv_out.forward(&h.map(silu));
        let cache = ForwardCache {
            ts_embed,
            tpre,
            temb,
            cols_in,
            in_dims: (input.b, input.h, input.w),
            enc,
            skip_widths,
            down_cols,
            level_dims,
            up_cols,
            dec: dec_caches.into_iter().map(|c| c.expect("decoder level visited")).collect(),
            final_h: h,
            cols_out,
        };
        Ok((out, cache))
    }

    /// Parameter gradients of `L` given `dL/dε̂`.
    pub fn backward(&self, cache: &ForwardCache<S>, dout: &Act<S>) -> Self {
        let mut grad = self.zeros_like();
        let levels = self.arch.levels();
        let (b, h0, w0) = cache.in_dims;
        let mut dh = self
            .conv_out
            .backward(dout, &cache.cols_out, &mut grad.conv_out, (b, h0, w0));
        for (d, &x) in dh.data.iter_mut().zip(&cache.final_h.data) {
            *d *= silu_grad(x);
        }
        let mut dtemb = vec![S::zero(); cache.temb.len()];
        let mut dskips: Vec<Option<Act<S>>> = (0..levels).map(|_| None).collect();
        for l in 0..levels - 1 {
            let (du, dt) = self.dec[l].backward(&dh, &cache.dec[l], &cache.temb, &mut grad.dec[l]);
            for (a, v) in dtemb.iter_mut().zip(dt) {
                *a += v;
            }
            let (hl, wl) = cache.level_dims[l];
            let dcat = self.up[l].backward(&du, &cache.up_cols[l], &mut grad.up[l], (b, hl, wl));
            let (dup, dskip) = dcat.split(cache.skip_widths[l + 1]);
            dskips[l] = Some(dskip);
            dh = dup.upsample2_backward();
        }
        for l in (0..levels).rev() {
            if let Some(ds) = &dskips[l] {
                dh.add_assign(ds);
            }
            let (d, dt) = self.enc[l].backward(&dh, &cache.enc[l], &cache.temb, &mut grad.enc[l]);
            for (a, v) in dtemb.iter_mut().zip(dt) {
                *a += v;
            }
            dh = d;
            if l > 0 {
                let (hp, wp) = cache.level_dims[l];
                let dpooled = self.down[l - 1].backward(&dh, &cache.down_cols[l - 1], &mut grad.down[l - 1], (b, hp, wp));
                let (hu, wu) = cache.level_dims[l - 1];
                dh = dpooled.avg_pool2_backward(hu, wu);
            }
        }
        self.conv_in.backward(&dh, &cache.cols_in, &mut grad.conv_in, (b, h0, w0));
        let dtpre: Vec<S> = dtemb
            .iter()
            .zip(&cache.tpre)
            .map(|(&g, &x)| g * silu_grad(x))
            .collect();
        self.time_dense.backward(&dtpre, &cache.ts_embed, &mut grad.time_dense);
        grad
    }
}

/// Input scale `c_in(t) = 1 / sqrt(mean_coeff² + std²)` keeping the noisy
/// channel at unit order for every `t`.
pub fn input_scale(model: &SdeModel, t: f64) -> Result<f64> {
    let m = model.marginal_prob(t)?;
    Ok(1.0 / (m.mean_coeff * m.mean_coeff + m.variance()).sqrt())
}

/// Pack `[c_in(t_b)·x_b ; y_b]` for a batch into the network layout.
pub fn assemble_input<S: Scalar>(
    model: &SdeModel,
    xs: &[&ImageTensor],
    ys: &[&ImageTensor],
    ts: &[f64],
) -> Result<Act<S>> {
    if xs.is_empty() || xs.len() != ys.len() || xs.len() != ts.len() {
        return Err(Error::Shape("batch of states, conditions and times must agree".into()));
    }
    let shape = xs[0].shape();
    for (x, y) in xs.iter().zip(ys) {
        if x.shape() != shape || y.shape() != shape {
            return Err(Error::Shape(format!(
                "state {} and condition {} must both be {}",
                x.shape(),
                y.shape(),
                shape
            )));
        }
    }
    let (h, w, c) = (shape.h, shape.w, shape.c);
    let b = xs.len();
    let mut act = Act::zeros(2 * c, b, h, w);
    let plane = h * w;
    for (bi, ((x, y), &t)) in xs.iter().zip(ys).zip(ts).enumerate() {
        let scale = input_scale(model, t)?;
        for ch in 0..c {
            let dx = &mut act.data[(ch * b + bi) * plane..][..plane];
            for (p, v) in dx.iter_mut().enumerate() {
                *v = S::of(f64::from(x.as_slice()[p * c + ch]) * scale);
            }
            let dy = &mut act.data[((c + ch) * b + bi) * plane..][..plane];
            for (p, v) in dy.iter_mut().enumerate() {
                *v = S::of(f64::from(y.as_slice()[p * c + ch]));
            }
        }
    }
    Ok(act)
}

/// Unpack item `bi` of a `C × B × H × W` activation into an image.
pub(crate) fn act_item<S: Scalar>(act: &Act<S>, bi: usize) -> ImageTensor {
    let plane = act.h * act.w;
    let shape = crate::tensor::Shape::new(act.h, act.w, act.c);
    let mut data = vec![0.0f32; shape.len()];
    for ch in 0..act.c {
        let src = &act.data[(ch * act.b + bi) * plane..][..plane];
        for (p, &v) in src.iter().enumerate() {
            data[p * act.c + ch] = v.f64() as f32;
        }
    }
    ImageTensor::new(shape, data).expect("consistent dims")
}

impl DenoiserNet<f32> {
    /// Predicted noise `ε̂` for a batch of noisy states.
    pub fn predict_noise(
        &self,
        model: &SdeModel,
        xs: &[&ImageTensor],
        ys: &[&ImageTensor],
        ts: &[f64],
    ) -> Result<Vec<ImageTensor>> {
        if let Some(x) = xs.first() {
            if x.shape().c != self.arch.image_channels {
                return Err(Error::Shape(format!(
                    "network has {} image channels, state has {}",
                    self.arch.image_channels,
                    x.shape().c
                )));
            }
        }
        let input = assemble_input::<f32>(model, xs, ys, ts)?;
        let out = self.forward(&input, ts)?;
        Ok((0..xs.len()).map(|bi| act_item(&out, bi)).collect())
    }

    /// Score estimate `−ε̂ / std(t)` for one noisy state.
    pub fn denoiser_forward(&self, model: &SdeModel, x: &ImageTensor, y: &ImageTensor, t: f64) -> Result<ImageTensor> {
        let std = model.marginal_prob(t)?.std;
        let mut eps = self
            .predict_noise(model, &[x], &[y], &[t])?
            .pop()
            .expect("one item");
        eps.scale((-1.0 / std) as f32);
        Ok(eps)
    }

    /// Bind the network to an SDE so it can act as a [`ScoreFunction`].
    pub fn as_score<'a>(&'a self, model: &'a SdeModel) -> NetScore<'a> {
        NetScore { net: self, model }
    }
}

/// A trained denoiser viewed as a score function of a given SDE.
#[derive(Clone, Copy)]
pub struct NetScore<'a> {
    pub net: &'a DenoiserNet<f32>,
    pub model: &'a SdeModel,
}

impl ScoreFunction for NetScore<'_> {
    fn score(&self, x: &ImageTensor, y: &ImageTensor, t: f64) -> Result<ImageTensor> {
        self.net.denoiser_forward(self.model, x, y, t)
    }
}
