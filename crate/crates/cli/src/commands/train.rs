use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use sdesr::dataio::{load_checkpoint, load_image_dir, save_checkpoint, synth_split, Checkpoint};
use sdesr::score::{ArchDescriptor, DenoiserNet};
use sdesr::training::{
    train, DegradationSpec, DownMethod, LambdaMode, LossRecord, TrainConfig, TrainHooks, TrainState, TrainingPairs,
    UpMethod,
};
use sdesr::{NoiseSchedule, SdeKind, SdeModel, Shape};

use super::ensure_dir;
use crate::config::{join, opt, write_run_config};

pub const LOSS_CSV: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "final.sdesr";

/// Train a conditional denoiser by denoising score matching.
#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Directory of high-resolution training images.
    #[arg(long, conflicts_with = "synthetic")]
    pub data_dir: Option<PathBuf>,
    /// Generate this many synthetic faces and train on the 90% training part.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long)]
    pub noise: bool,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5000)]
    pub warmup_steps: usize,
    /// `std2` or `constant`.
    #[arg(long, default_value = "std2")]
    pub lambda: LambdaMode,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 1.0)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "ve")]
    pub kind: SdeKind,
    #[arg(long, default_value_t = 0.01)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 348.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = sdesr::sde::DEFAULT_T_MIN)]
    pub t_min: f64,
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    /// `area` or `bicubic`.
    #[arg(long, default_value = "area")]
    pub down: DownMethod,
    #[arg(long, value_delimiter = ',', default_value = "32,64")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub time_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub time_hidden: usize,
    /// Steps per loss CSV row.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    /// Steps between checkpoints; 0 disables periodic checkpoints.
    #[arg(long, default_value_t = 5000)]
    pub checkpoint_every: usize,
    /// Continue from this checkpoint at its recorded step.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

impl TrainArgs {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("data_dir", opt(&self.data_dir.as_ref().map(|p| p.display()))),
            ("synthetic", opt(&self.synthetic)),
            ("data_seed", self.data_seed.to_string()),
            ("noise", self.noise.to_string()),
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("steps", self.steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("lambda", self.lambda.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("seed", self.seed.to_string()),
            ("kind", self.kind.to_string()),
            ("sigma_min", self.sigma_min.to_string()),
            ("sigma_max", self.sigma_max.to_string()),
            ("beta_min", self.beta_min.to_string()),
            ("beta_max", self.beta_max.to_string()),
            ("t_min", self.t_min.to_string()),
            ("factor", self.factor.to_string()),
            ("down", self.down.to_string()),
            ("widths", join(&self.widths)),
            ("time_dim", self.time_dim.to_string()),
            ("time_hidden", self.time_hidden.to_string()),
            ("log_every", self.log_every.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("resume", opt(&self.resume.as_ref().map(|p| p.display()))),
        ]
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            warmup_steps: self.warmup_steps,
            lambda_mode: self.lambda,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            seed: self.seed,
            sde_kind: self.kind,
            schedule: NoiseSchedule::new(self.sigma_min, self.sigma_max, self.beta_min, self.beta_max)?,
            t_min: self.t_min,
            log_every: self.log_every,
            checkpoint_every: (self.checkpoint_every > 0).then_some(self.checkpoint_every),
            degradation: DegradationSpec {
                factor: self.factor,
                down_method: self.down,
                up_method: UpMethod::Bicubic,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn arch(&self) -> ArchDescriptor {
        ArchDescriptor {
            image_channels: 1,
            widths: self.widths.clone(),
            time_dim: self.time_dim,
            time_hidden: self.time_hidden,
        }
    }
}

pub fn checkpoint_name(step: usize) -> String {
    format!("ckpt_{step:07}.sdesr")
}

struct Outputs<'a> {
    dir: &'a Path,
    loss: fs::File,
    model: SdeModel,
    degradation: DegradationSpec,
    seed: u64,
}

impl TrainHooks for Outputs<'_> {
    fn on_log(&mut self, r: &LossRecord) -> sdesr::Result<()> {
        writeln!(self.loss, "{},{},{}", r.step, r.loss, r.lr)?;
        log::info!("step {} loss {:.4} lr {:.3e}", r.step, r.loss, r.lr);
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &TrainState) -> sdesr::Result<()> {
        let c = Checkpoint::from_state(state, &self.model, self.degradation, self.seed);
        save_checkpoint(&c, &self.dir.join(checkpoint_name(state.step)))
    }
}

fn training_images(args: &TrainArgs) -> Result<Vec<sdesr::ImageTensor>> {
    let shape = Shape::new(args.height, args.width, 1);
    match (&args.data_dir, args.synthetic) {
        (Some(dir), None) => {
            let set = load_image_dir(dir, None)?;
            for (p, why) in &set.rejected {
                log::warn!("skipped {}: {why}", p.display());
            }
            Ok(set.images)
        }
        (None, Some(n)) => Ok(synth_split(n, shape, args.data_seed, args.noise)?.0.images),
        _ => bail!("give exactly one of --data-dir or --synthetic"),
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg = args.train_config()?;
    let model = cfg.model();
    let images = training_images(args)?;
    let pairs = TrainingPairs::new(&images, &cfg.degradation)?;
    ensure_dir(&args.out_dir)?;

    let mut state = match &args.resume {
        Some(path) => {
            let c = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            if c.kind != args.kind {
                bail!("checkpoint is {} but --kind is {}", c.kind, args.kind);
            }
            if c.arch != args.arch() {
                bail!("checkpoint architecture {:?} differs from the requested {:?}", c.arch, args.arch());
            }
            let s = c.train_state()?;
            log::info!("resuming at step {}", s.step);
            s
        }
        None => TrainState::new(DenoiserNet::new(args.arch(), args.seed)?),
    };
    if state.step >= cfg.steps {
        bail!("checkpoint is already at step {} of {}", state.step, cfg.steps);
    }

    let loss_path = args.out_dir.join(LOSS_CSV);
    let fresh = args.resume.is_none() || !loss_path.exists();
    let mut loss = if fresh {
        fs::File::create(&loss_path)?
    } else {
        OpenOptions::new().append(true).open(&loss_path)?
    };
    if fresh {
        writeln!(loss, "step,loss,lr")?;
    }
    write_run_config(&args.out_dir, "train", &args.entries())?;
    let mut hooks = Outputs {
        dir: &args.out_dir,
        loss,
        model,
        degradation: cfg.degradation,
        seed: cfg.seed,
    };
    train(&cfg, &pairs, &mut state, &mut hooks)?;
    let c = Checkpoint::from_state(&state, &model, cfg.degradation, cfg.seed);
    save_checkpoint(&c, &args.out_dir.join(FINAL_CHECKPOINT))?;
    Ok(())
}
