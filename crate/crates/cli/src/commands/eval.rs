use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use sdesr::dataio::{list_images, load_image};
use sdesr::metrics::{cosine_similarity, evaluate_image, read_fvec, ImageMetrics, MetricReport, DEFAULT_FEATURE_DIM};
use sdesr::training::{DegradationSpec, DownMethod, UpMethod};

use super::ensure_dir;
use crate::config::{opt, write_run_config};

pub const PER_IMAGE_CSV: &str = "per_image.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

/// Score SR images against references matched by file stem.
#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub sr_dir: PathBuf,
    #[arg(long)]
    pub hr_dir: PathBuf,
    #[arg(long)]
    pub lr_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    /// `area` or `bicubic`.
    #[arg(long, default_value = "area")]
    pub down: DownMethod,
    /// Precomputed SR features (`<stem>.fvec`); requires `--hr-features`.
    #[arg(long, requires = "hr_features")]
    pub sr_features: Option<PathBuf>,
    #[arg(long, requires = "sr_features")]
    pub hr_features: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl EvalArgs {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("sr_dir", self.sr_dir.display().to_string()),
            ("hr_dir", self.hr_dir.display().to_string()),
            ("lr_dir", self.lr_dir.display().to_string()),
            ("factor", self.factor.to_string()),
            ("down", self.down.to_string()),
            ("sr_features", opt(&self.sr_features.as_ref().map(|p| p.display()))),
            ("hr_features", opt(&self.hr_features.as_ref().map(|p| p.display()))),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }

    pub fn spec(&self) -> DegradationSpec {
        DegradationSpec {
            factor: self.factor,
            down_method: self.down,
            up_method: UpMethod::Bicubic,
        }
    }
}

/// First file in `dir` whose stem is `stem`.
fn find_by_stem(dir: &Path, stem: &str) -> Result<Option<PathBuf>> {
    Ok(list_images(dir)?
        .into_iter()
        .find(|p| p.file_stem().and_then(|s| s.to_str()) == Some(stem)))
}

fn evaluate_one(args: &EvalArgs, sr_path: &Path, stem: &str) -> Result<ImageMetrics> {
    let Some(hr_path) = find_by_stem(&args.hr_dir, stem)? else {
        bail!("{stem}: no match in {}", args.hr_dir.display());
    };
    let Some(lr_path) = find_by_stem(&args.lr_dir, stem)? else {
        bail!("{stem}: no match in {}", args.lr_dir.display());
    };
    let sr = load_image(sr_path)?;
    let hr = load_image(&hr_path)?;
    let lr = load_image(&lr_path)?;
    let mut m = evaluate_image(stem, &sr, &hr, &lr, &args.spec(), DEFAULT_FEATURE_DIM)?;
    if let (Some(sd), Some(hd)) = (&args.sr_features, &args.hr_features) {
        let zs = read_fvec(&sd.join(format!("{stem}.fvec")))?;
        let zh = read_fvec(&hd.join(format!("{stem}.fvec")))?;
        m.cosine = cosine_similarity(&zs, &zh)?;
    }
    Ok(m)
}

/// Evaluate every SR image. Failures are collected; the CSVs cover the
/// images that could be evaluated and the command fails afterwards if any
/// image was skipped.
pub fn run(args: &EvalArgs) -> Result<MetricReport> {
    args.spec().validate()?;
    ensure_dir(&args.out_dir)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for sr_path in list_images(&args.sr_dir)? {
        let stem = sr_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        match evaluate_one(args, &sr_path, &stem) {
            Ok(m) => records.push(m),
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    if records.is_empty() {
        bail!("no images evaluated:\n  {}", failures.join("\n  "));
    }
    let report = MetricReport::new(records)?;
    report.write_per_image_csv(&args.out_dir.join(PER_IMAGE_CSV))?;
    report.write_summary_csv(&args.out_dir.join(SUMMARY_CSV))?;
    write_run_config(&args.out_dir, "eval", &args.entries())?;
    if !failures.is_empty() {
        bail!(
            "{} of {} images could not be evaluated:\n  {}",
            failures.len(),
            failures.len() + report.len(),
            failures.join("\n  ")
        );
    }
    Ok(report)
}
