//! Image files, datasets and checkpoints.

mod checkpoint;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedArray, CHECKPOINT_VERSION};
pub use synth::{render_face, synth_faces, synth_split, TEST_STREAM};

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::{ImageTensor, Shape};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    Directory(PathBuf),
    Synthetic { seed: u64, stream: u64 },
}

/// An in-memory image collection of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub source: DatasetSource,
    pub shape: Shape,
    pub images: Vec<ImageTensor>,
    /// Identifier per image (file stem or synthetic index).
    pub names: Vec<String>,
    /// Files that could not be used, with the reason.
    pub rejected: Vec<(PathBuf, String)>,
}

impl DatasetHandle {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Config(format!("index {bad} out of range for {} images", self.len())));
        }
        Ok(Self {
            source: self.source.clone(),
            shape: self.shape,
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            rejected: Vec::new(),
        })
    }
}

fn is_raster(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

/// Read an 8-bit grayscale or RGB raster; bytes map to `[0, 1]` by `/255`.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (data, c, w, h): (Vec<u8>, usize, u32, u32) = if img.color().has_color() {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        (rgb.into_raw(), 3, w, h)
    } else {
        let g = img.to_luma8();
        let (w, h) = g.dimensions();
        (g.into_raw(), 1, w, h)
    };
    ImageTensor::new(
        Shape::new(h as usize, w as usize, c),
        data.into_iter().map(|b| f32::from(b) / 255.0).collect(),
    )
}

/// Quantize to 8 bits (`round(255·v)` after clamping) and write PNG or
/// PGM/PPM according to the extension.
pub fn save_image(path: &Path, img: &ImageTensor) -> Result<()> {
    let s = img.shape();
    let bytes: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let dynamic = match s.c {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(s.w as u32, s.h as u32, bytes).ok_or_else(|| Error::Shape(s.to_string()))?,
        ),
        3 => DynamicImage::ImageRgb8(
            RgbImage::from_raw(s.w as u32, s.h as u32, bytes).ok_or_else(|| Error::Shape(s.to_string()))?,
        ),
        c => return Err(Error::Shape(format!("cannot save {c}-channel image"))),
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let format = match ext.as_str() {
        "png" => image::ImageFormat::Png,
        "pgm" | "ppm" | "pnm" => image::ImageFormat::Pnm,
        other => return Err(Error::Config(format!("unsupported image extension {other:?}"))),
    };
    dynamic.save_with_format(path, format).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Files listed in `manifest.txt` (one relative path per line), or else
/// every PNG/PGM/PPM in the directory in name order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = dir.join(MANIFEST_NAME);
    if manifest.is_file() {
        return Ok(fs::read_to_string(&manifest)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| dir.join(l))
            .collect());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_raster(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every image of a directory. Unreadable files and files whose shape
/// differs from `expected` are listed in `rejected`; without `expected`,
/// mixed shapes are an error.
pub fn load_image_dir(dir: &Path, expected: Option<Shape>) -> Result<DatasetHandle> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Empty("image directory"));
    }
    let mut shape = expected;
    let mut images = Vec::new();
    let mut names = Vec::new();
    let mut rejected = Vec::new();
    for path in files {
        match load_image(&path) {
            Ok(img) => match shape {
                Some(s) if s != img.shape() => {
                    if expected.is_none() {
                        return Err(Error::Shape(format!(
                            "mixed image shapes: {s} and {} ({})",
                            img.shape(),
                            path.display()
                        )));
                    }
                    log::warn!("rejecting {}: shape {} != {s}", path.display(), img.shape());
                    rejected.push((path, format!("shape {} != {s}", img.shape())));
                }
                _ => {
                    shape = Some(img.shape());
                    names.push(
                        path.file_stem()
                            .and_then(|s| s.to_str())
                            .unwrap_or_default()
                            .to_string(),
                    );
                    images.push(img);
                }
            },
            Err(e) => {
                log::warn!("rejecting {}: {e}", path.display());
                rejected.push((path, e.to_string()));
            }
        }
    }
    let shape = match shape {
        Some(s) if !images.is_empty() => s,
        _ => return Err(Error::Empty("loadable images")),
    };
    Ok(DatasetHandle {
        source: DatasetSource::Directory(dir.to_path_buf()),
        shape,
        images,
        names,
        rejected,
    })
}

/// `l` distinct indices drawn uniformly without replacement.
pub fn sample_test_set(handle: &DatasetHandle, l: usize, seed: u64) -> Result<Vec<usize>> {
    if l > handle.len() {
        return Err(Error::Config(format!("cannot sample {l} of {} images", handle.len())));
    }
    let mut rng = RandomSource::new(seed);
    Ok(sample(rng.rng_mut(), handle.len(), l).into_vec())
}
