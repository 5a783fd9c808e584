//! Subcommand implementations. Each `run` function resolves its arguments,
//! writes its outputs and records the run configuration.

pub mod eval;
pub mod gen_data;
pub mod sample;
pub mod sweep;
pub mod train;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use sdesr::dataio::save_image;
use sdesr::sampler::{pc_sample, SamplerConfig};
use sdesr::score::ScoreFunction;
use sdesr::{ImageTensor, RandomSource, SdeModel, Shape};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Sample one SR image per condition; chain `i` draws from the stream
/// derived from `(seed, i)`, so results do not depend on evaluation order.
pub fn sample_all<S: ScoreFunction + ?Sized>(
    model: &SdeModel,
    score: &S,
    conditions: &[ImageTensor],
    config: &SamplerConfig,
    seed: u64,
) -> Result<Vec<ImageTensor>> {
    conditions
        .iter()
        .enumerate()
        .map(|(i, y)| {
            pc_sample(model, score, y, config, &mut RandomSource::derived(seed, i as u64))
                .with_context(|| format!("sampling image {i}"))
        })
        .collect()
}

/// Tile rows of equally shaped images with a 2-pixel white gutter.
pub fn grid(rows: &[Vec<&ImageTensor>]) -> Result<ImageTensor> {
    const GAP: usize = 2;
    let first = rows
        .first()
        .and_then(|r| r.first())
        .context("grid needs at least one image")?;
    let s = first.shape();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let out = Shape::new(
        rows.len() * (s.h + GAP) - GAP,
        cols * (s.w + GAP) - GAP,
        s.c,
    );
    let mut img = ImageTensor::filled(out, 1.0);
    for (r, row) in rows.iter().enumerate() {
        for (c, tile) in row.iter().enumerate() {
            anyhow::ensure!(tile.shape() == s, "grid tiles must share one shape");
            for y in 0..s.h {
                for x in 0..s.w {
                    for ch in 0..s.c {
                        img.set(r * (s.h + GAP) + y, c * (s.w + GAP) + x, ch, tile.get(y, x, ch));
                    }
                }
            }
        }
    }
    Ok(img)
}

pub fn save_set(dir: &Path, names: &[String], images: &[ImageTensor]) -> Result<()> {
    ensure_dir(dir)?;
    for (name, img) in names.iter().zip(images) {
        let p = dir.join(format!("{name}.png"));
        save_image(&p, img).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let a = ImageTensor::filled(Shape::new(2, 3, 1), 0.0);
        let g = grid(&[vec![&a, &a], vec![&a]]).unwrap();
        assert_eq!(g.shape(), Shape::new(6, 8, 1));
        assert_eq!(g.get(0, 0, 0), 0.0);
        assert_eq!(g.get(0, 3, 0), 1.0);
        assert_eq!(g.get(4, 5, 0), 1.0);
    }
}
