use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use sdesr::dataio::{load_checkpoint, load_image_dir, sample_test_set, synth_split, DatasetHandle};
use sdesr::metrics::{
    evaluate_image, high_frequency_energy, mean_std, metric_correlation, Correlation, ImageMetrics, MetricReport,
    CONSISTENCY_CSV_SCALE, DEFAULT_FEATURE_DIM, PSNR_CSV_CAP,
};
use sdesr::sampler::{Corrector, Predictor, SamplerConfig};
use sdesr::training::degrade;
use sdesr::{SdeKind, Shape};

use super::{ensure_dir, sample_all};
use crate::config::{join, opt, write_run_config};

/// The signal-to-noise ratio reported as CS-optimal for the full-scale model.
pub const REFERENCE_OPTIMUM_R: f64 = 0.16;
pub const SWEEP_CSV: &str = "sweep.csv";
pub const PER_IMAGE_CSV: &str = "per_image.csv";
pub const CORRELATION_CSV: &str = "correlation.csv";

/// Sample held-out images for each Langevin signal-to-noise ratio `r` and
/// tabulate quality, feature similarity and high-frequency energy.
#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    /// A VE checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.16,0.3,0.5")]
    pub r: Vec<f64>,
    /// Number of test images.
    #[arg(long, default_value_t = 64)]
    pub l: usize,
    /// Directory of high-resolution test images.
    #[arg(long, conflicts_with = "synthetic")]
    pub hr_dir: Option<PathBuf>,
    /// Use the held-out part of this many synthetic faces.
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
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long)]
    pub predictor: Option<Predictor>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl SweepArgs {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("checkpoint", self.checkpoint.display().to_string()),
            ("r", join(&self.r)),
            ("l", self.l.to_string()),
            ("hr_dir", opt(&self.hr_dir.as_ref().map(|p| p.display()))),
            ("synthetic", opt(&self.synthetic)),
            ("data_seed", self.data_seed.to_string()),
            ("noise", self.noise.to_string()),
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("predictor", opt(&self.predictor)),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }
}

/// Aggregates for one value of `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub report: MetricReport,
    pub hf_energy: Vec<f64>,
    pub hf_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Mean CS against mean PSNR across `r`.
    pub cs_vs_psnr: Correlation,
    /// `r` against mean high-frequency energy.
    pub r_vs_hf: Correlation,
}

fn test_images(args: &SweepArgs) -> Result<DatasetHandle> {
    let set = match (&args.hr_dir, args.synthetic) {
        (Some(dir), None) => load_image_dir(dir, None)?,
        (None, Some(n)) => synth_split(n, Shape::new(args.height, args.width, 1), args.data_seed, args.noise)?.1,
        _ => bail!("give exactly one of --hr-dir or --synthetic"),
    };
    let idx = sample_test_set(&set, args.l, args.seed)?;
    Ok(set.subset(&idx)?)
}

pub fn sweep(args: &SweepArgs) -> Result<SweepSummary> {
    if args.r.len() < 3 {
        bail!("the sweep needs at least 3 values of r, got {}", args.r.len());
    }
    let ckpt = load_checkpoint(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    if ckpt.kind != SdeKind::Ve {
        bail!("the r-sweep needs a VE checkpoint, got {}", ckpt.kind);
    }
    let model = ckpt.model()?;
    let net = ckpt.net()?;
    let score = net.as_score(&model);
    let spec = ckpt.degradation;
    let set = test_images(args)?;
    let mut lr = Vec::with_capacity(set.len());
    let mut up = Vec::with_capacity(set.len());
    for img in &set.images {
        let (l, u) = degrade(img, &spec)?;
        lr.push(l);
        up.push(u);
    }

    let mut rows = Vec::with_capacity(args.r.len());
    for &r in &args.r {
        let mut cfg = SamplerConfig::for_kind(ckpt.kind);
        cfg.n_steps = args.n;
        cfg.m_corrector = args.m;
        cfg.corrector = Corrector::Langevin;
        cfg.snr = r;
        if let Some(p) = args.predictor {
            cfg.predictor = p;
        }
        cfg.validate()?;
        let sr = sample_all(&model, &score, &up, &cfg, args.seed)?;
        let metrics = (0..sr.len())
            .map(|i| evaluate_image(&set.names[i], &sr[i], &set.images[i], &lr[i], &spec, DEFAULT_FEATURE_DIM))
            .collect::<sdesr::Result<Vec<ImageMetrics>>>()?;
        let hf_energy: Vec<f64> = sr.iter().map(high_frequency_energy).collect();
        let hf_mean = mean_std(&hf_energy)?.0;
        let report = MetricReport::new(metrics)?;
        log::info!(
            "r {r}: psnr {:.3} cs {:.4} hf {:.5}",
            report.psnr.mean,
            report.cosine.mean,
            hf_mean
        );
        rows.push(SweepRow {
            r,
            report,
            hf_energy,
            hf_mean,
        });
    }

    let cs: Vec<f64> = rows.iter().map(|w| w.report.cosine.mean).collect();
    let ps: Vec<f64> = rows.iter().map(|w| w.report.psnr.mean).collect();
    let hf: Vec<f64> = rows.iter().map(|w| w.hf_mean).collect();
    Ok(SweepSummary {
        cs_vs_psnr: metric_correlation(&cs, &ps)?,
        r_vs_hf: metric_correlation(&args.r, &hf)?,
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_outputs(dir: &Path, s: &SweepSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(SWEEP_CSV))?;
    w.write_record([
        "r",
        "psnr_db",
        "psnr_std",
        "ssim",
        "ssim_std",
        "consistency_x1e4",
        "consistency_std_x1e4",
        "cs",
        "cs_std",
        "hf_energy",
        "count",
        "reference_optimum",
    ])?;
    for row in &s.rows {
        let rep = &row.report;
        w.write_record([
            row.r.to_string(),
            rep.psnr.mean.to_string(),
            rep.psnr.std.to_string(),
            rep.ssim.mean.to_string(),
            rep.ssim.std.to_string(),
            (rep.consistency.mean * CONSISTENCY_CSV_SCALE).to_string(),
            (rep.consistency.std * CONSISTENCY_CSV_SCALE).to_string(),
            rep.cosine.mean.to_string(),
            rep.cosine.std.to_string(),
            row.hf_mean.to_string(),
            rep.len().to_string(),
            (row.r == REFERENCE_OPTIMUM_R).to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(PER_IMAGE_CSV))?;
    w.write_record(["r", "image_id", "psnr_db", "ssim", "consistency_x1e4", "cosine", "hf_energy"])?;
    for row in &s.rows {
        for (m, hf) in row.report.images.iter().zip(&row.hf_energy) {
            w.write_record([
                row.r.to_string(),
                m.id.clone(),
                m.psnr.min(PSNR_CSV_CAP).to_string(),
                m.ssim.to_string(),
                (m.consistency * CONSISTENCY_CSV_SCALE).to_string(),
                m.cosine.to_string(),
                hf.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(CORRELATION_CSV))?;
    w.write_record(["pair", "pearson", "spearman", "points"])?;
    let n = s.rows.len().to_string();
    for (name, c) in [("cs_vs_psnr", s.cs_vs_psnr), ("r_vs_hf_energy", s.r_vs_hf)] {
        w.write_record([name.to_string(), fmt_opt(c.pearson), fmt_opt(c.spearman), n.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &SweepArgs) -> Result<SweepSummary> {
    ensure_dir(&args.out_dir)?;
    let s = sweep(args)?;
    write_outputs(&args.out_dir, &s)?;
    write_run_config(&args.out_dir, "sweep-r", &args.entries())?;
    Ok(s)
}
