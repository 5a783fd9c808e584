use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use sdesr::dataio::{load_checkpoint, load_image_dir, save_image, Checkpoint};
use sdesr::sampler::{Corrector, Predictor, SamplerConfig};
use sdesr::training::degrade;
use sdesr::{ImageTensor, SdeKind};

use super::{ensure_dir, grid, sample_all, save_set};
use crate::config::{opt, write_run_config};

/// Corrector steps implied by `--corrector langevin` without `--m`.
pub const LANGEVIN_DEFAULT_M: usize = 2;
pub const GRID_NAME: &str = "grid.png";

/// Super-resolve images with the predictor-corrector sampler.
#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// High-resolution images, degraded as recorded in the checkpoint.
    #[arg(long, conflicts_with = "lr_dir")]
    pub hr_dir: Option<PathBuf>,
    /// Low-resolution inputs.
    #[arg(long)]
    pub lr_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Must match the checkpoint when given.
    #[arg(long)]
    pub kind: Option<SdeKind>,
    /// Number of reverse-time steps.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Corrector steps per predictor step.
    #[arg(long)]
    pub m: Option<usize>,
    /// Langevin signal-to-noise ratio; requires `--corrector langevin`.
    #[arg(long)]
    pub r: Option<f64>,
    /// `em` or `rd`; defaults to Euler-Maruyama for VE, reverse diffusion otherwise.
    #[arg(long)]
    pub predictor: Option<Predictor>,
    /// `identity` or `langevin`.
    #[arg(long, default_value = "identity")]
    pub corrector: Corrector,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use only the first `limit` images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Skip the final posterior-mean step.
    #[arg(long)]
    pub no_denoise: bool,
}

impl SampleArgs {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("checkpoint", self.checkpoint.display().to_string()),
            ("hr_dir", opt(&self.hr_dir.as_ref().map(|p| p.display()))),
            ("lr_dir", opt(&self.lr_dir.as_ref().map(|p| p.display()))),
            ("out_dir", self.out_dir.display().to_string()),
            ("kind", opt(&self.kind)),
            ("n", self.n.to_string()),
            ("m", opt(&self.m)),
            ("r", opt(&self.r)),
            ("predictor", opt(&self.predictor)),
            ("corrector", self.corrector.to_string()),
            ("seed", self.seed.to_string()),
            ("limit", opt(&self.limit)),
            ("no_denoise", self.no_denoise.to_string()),
        ]
    }

    /// Resolve sampler flags against the checkpoint's SDE kind.
    pub fn sampler_config(&self, kind: SdeKind) -> Result<SamplerConfig> {
        if let Some(k) = self.kind {
            if k != kind {
                bail!("checkpoint was trained for {kind} but --kind is {k}");
            }
        }
        if self.r.is_some() && self.corrector != Corrector::Langevin {
            bail!("--r only applies with --corrector langevin");
        }
        let mut cfg = SamplerConfig::for_kind(kind);
        cfg.n_steps = self.n;
        cfg.corrector = self.corrector;
        cfg.m_corrector = match (self.corrector, self.m) {
            (_, Some(m)) => m,
            (Corrector::Langevin, None) => LANGEVIN_DEFAULT_M,
            (Corrector::Identity, None) => 0,
        };
        if let Some(r) = self.r {
            cfg.snr = r;
        }
        if let Some(p) = self.predictor {
            cfg.predictor = p;
        }
        cfg.denoise_final = !self.no_denoise;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Conditions to sample from: names, low-resolution inputs, their
/// upsampled versions and, when known, the references.
pub struct Inputs {
    pub names: Vec<String>,
    pub lr: Vec<ImageTensor>,
    pub up: Vec<ImageTensor>,
    pub hr: Option<Vec<ImageTensor>>,
}

pub fn load_inputs(
    ckpt: &Checkpoint,
    hr_dir: Option<&PathBuf>,
    lr_dir: Option<&PathBuf>,
    limit: Option<usize>,
) -> Result<Inputs> {
    let spec = ckpt.degradation;
    let (set, is_hr) = match (hr_dir, lr_dir) {
        (Some(d), None) => (load_image_dir(d, None)?, true),
        (None, Some(d)) => (load_image_dir(d, None)?, false),
        _ => bail!("give exactly one of --hr-dir or --lr-dir"),
    };
    for (p, why) in &set.rejected {
        log::warn!("skipped {}: {why}", p.display());
    }
    let n = limit.unwrap_or(set.len()).min(set.len());
    let names = set.names[..n].to_vec();
    let images = &set.images[..n];
    if is_hr {
        let mut lr = Vec::with_capacity(n);
        let mut up = Vec::with_capacity(n);
        for img in images {
            let (l, u) = degrade(img, &spec)?;
            lr.push(l);
            up.push(u);
        }
        Ok(Inputs {
            names,
            lr,
            up,
            hr: Some(images.to_vec()),
        })
    } else {
        let up = images
            .iter()
            .map(|l| {
                let mut u = spec.upsample(l)?;
                u.clamp01();
                Ok(u)
            })
            .collect::<sdesr::Result<Vec<_>>>()?;
        Ok(Inputs {
            names,
            lr: images.to_vec(),
            up,
            hr: None,
        })
    }
}

pub fn run(args: &SampleArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let cfg = args.sampler_config(ckpt.kind)?;
    let model = ckpt.model()?;
    let net = ckpt.net()?;
    let inputs = load_inputs(&ckpt, args.hr_dir.as_ref(), args.lr_dir.as_ref(), args.limit)?;
    ensure_dir(&args.out_dir)?;
    let sr = sample_all(&model, &net.as_score(&model), &inputs.up, &cfg, args.seed)?;
    save_set(&args.out_dir.join("sr"), &inputs.names, &sr)?;
    save_set(&args.out_dir.join("lr"), &inputs.names, &inputs.lr)?;
    save_set(&args.out_dir.join("up"), &inputs.names, &inputs.up)?;
    if let Some(hr) = &inputs.hr {
        save_set(&args.out_dir.join("hr"), &inputs.names, hr)?;
    }
    let rows: Vec<Vec<&ImageTensor>> = (0..sr.len())
        .map(|i| {
            let mut row = vec![&inputs.up[i], &sr[i]];
            if let Some(hr) = &inputs.hr {
                row.push(&hr[i]);
            }
            row
        })
        .collect();
    save_image(&args.out_dir.join(GRID_NAME), &grid(&rows)?)?;
    write_run_config(&args.out_dir, "sample", &args.entries())?;
    log::info!("wrote {} samples to {}", sr.len(), args.out_dir.display());
    Ok(())
}
