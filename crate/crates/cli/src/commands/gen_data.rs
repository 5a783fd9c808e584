use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use sdesr::dataio::{synth_faces, synth_split, MANIFEST_NAME};
use sdesr::Shape;

use super::{ensure_dir, save_set};
use crate::config::write_run_config;

/// Write procedurally generated grayscale toy faces.
#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct GenDataArgs {
    /// Number of faces.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add N(0, 0.01²) pixel noise.
    #[arg(long)]
    pub noise: bool,
    /// Write a 90/10 split into `train/` and `test/`, the test faces drawn
    /// from a stream disjoint from the training faces.
    #[arg(long)]
    pub split: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl GenDataArgs {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("seed", self.seed.to_string()),
            ("noise", self.noise.to_string()),
            ("split", self.split.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }
}

fn write_manifest(dir: &std::path::Path, names: &[String]) -> Result<()> {
    let text: String = names.iter().map(|n| format!("{n}.png\n")).collect();
    fs::write(dir.join(MANIFEST_NAME), text).with_context(|| format!("writing manifest in {}", dir.display()))
}

pub fn run(args: &GenDataArgs) -> Result<()> {
    let shape = Shape::new(args.height, args.width, 1);
    ensure_dir(&args.out_dir)?;
    if args.split {
        let (train, test) = synth_split(args.n, shape, args.seed, args.noise)?;
        for (sub, set) in [("train", &train), ("test", &test)] {
            let dir = args.out_dir.join(sub);
            save_set(&dir, &set.names, &set.images)?;
            write_manifest(&dir, &set.names)?;
        }
    } else {
        let set = synth_faces(args.n, shape, args.seed, args.noise)?;
        save_set(&args.out_dir, &set.names, &set.images)?;
        write_manifest(&args.out_dir, &set.names)?;
    }
    write_run_config(&args.out_dir, "gen-data", &args.entries())?;
    log::info!("wrote {} faces to {}", args.n, args.out_dir.display());
    Ok(())
}
