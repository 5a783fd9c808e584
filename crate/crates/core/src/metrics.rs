//! Image quality metrics, feature cosine similarity and the correlation
//! analysis used by the r-sweep.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::ImageTensor;
use crate::training::DegradationSpec;

/// PSNR value written to CSV files for identical images.
pub const PSNR_CSV_CAP: f64 = 100.0;
/// Consistency is reported multiplied by this factor in CSV files.
pub const CONSISTENCY_CSV_SCALE: f64 = 1e4;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DEFAULT_FEATURE_DIM: usize = 512;
const PROJECTION_SEED: u64 = 0x5EED_FEA7;
const FVEC_MAGIC: &[u8; 4] = b"FVEC";
const FVEC_VERSION: u32 = 1;

pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.is_empty() {
        return Err(Error::Empty("image"));
    }
    let s: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

/// `10·log10(1 / MSE)` for data range 1; `+∞` when the images are equal.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|j| k[j] * plane[y * w + x + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM (11×11 Gaussian window, σ = 1.5, valid region), averaged
/// over channels.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s = a.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {s}"
        )));
    }
    let k = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for ch in 0..s.c {
        let pa: Vec<f64> = a.channel(ch).as_slice().iter().map(|&v| f64::from(v)).collect();
        let pb: Vec<f64> = b.channel(ch).as_slice().iter().map(|&v| f64::from(v)).collect();
        let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
        let mu_a = filter_valid(&pa, s.h, s.w, &k);
        let mu_b = filter_valid(&pb, s.h, s.w, &k);
        let e_aa = filter_valid(&prod(&pa, &pa), s.h, s.w, &k);
        let e_bb = filter_valid(&prod(&pb, &pb), s.h, s.w, &k);
        let e_ab = filter_valid(&prod(&pa, &pb), s.h, s.w, &k);
        let n = mu_a.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / n as f64;
    }
    Ok(total / s.c as f64)
}

/// MSE between the downsampled SR image and the low-resolution input.
///
/// The downsampled image is an `f32` image like `y_lr`, so an SR image whose
/// downsampling reproduces `y_lr` scores exactly 0.
pub fn consistency(sr: &ImageTensor, y_lr: &ImageTensor, spec: &DegradationSpec) -> Result<f64> {
    let down = spec.downsample(sr)?;
    if down.shape() != y_lr.shape() {
        return Err(Error::Shape(format!(
            "downsampled output is {}, low-resolution input is {}",
            down.shape(),
            y_lr.shape()
        )));
    }
    mse(&down, y_lr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `⟨a, b⟩ / (‖a‖·‖b‖)`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::Shape(format!(
            "feature lengths {} and {} differ",
            a.values.len(),
            b.values.len()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Average cosine similarity over `(sr, reference)` feature pairs and its
/// population standard deviation.
pub fn average_cs(pairs: &[(FeatureVector, FeatureVector)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Empty("feature pairs"));
    }
    let sims = pairs
        .iter()
        .map(|(a, b)| cosine_similarity(a, b))
        .collect::<Result<Vec<_>>>()?;
    mean_std(&sims)
}

/// Hand-crafted embedding: 8×8 grid of cell means and standard deviations,
/// 4×4 grid of 8-bin gradient-orientation histograms (magnitude weighted)
/// and a constant term, mapped to `dim` values by a fixed Gaussian random
/// projection and normalized to unit length.
pub fn default_feature_extract(img: &ImageTensor, dim: usize) -> FeatureVector {
    let g = img.to_gray();
    let (h, w) = (g.shape().h, g.shape().w);
    let px = |y: usize, x: usize| f64::from(g.get(y, x, 0));
    let mut raw = Vec::new();
    let bounds = |n: usize, cells: usize, i: usize| (i * n / cells, (i + 1) * n / cells);
    for cy in 0..8 {
        for cx in 0..8 {
            let (y0, y1) = bounds(h, 8, cy);
            let (x0, x1) = bounds(w, 8, cx);
            let vals: Vec<f64> = (y0..y1).flat_map(|y| (x0..x1).map(move |x| (y, x))).map(|(y, x)| px(y, x)).collect();
            let (m, s) = mean_std(&vals).unwrap_or((0.0, 0.0));
            raw.push(m);
            raw.push(s);
        }
    }
    let mut hist = vec![0.0; 4 * 4 * 8];
    for y in 0..h {
        for x in 0..w {
            let gx = px(y, (x + 1).min(w - 1)) - px(y, x.saturating_sub(1));
            let gy = px((y + 1).min(h - 1), x) - px(y.saturating_sub(1), x);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(2.0 * std::f64::consts::PI);
            let bin = ((angle / (2.0 * std::f64::consts::PI) * 8.0) as usize).min(7);
            let cell = (y * 4 / h) * 4 + x * 4 / w;
            hist[cell * 8 + bin] += mag;
        }
    }
    let scale = 1.0 / (h * w).max(1) as f64 * 16.0;
    raw.extend(hist.iter().map(|v| v * scale));
    raw.push(1.0);

    let mut rng = RandomSource::new(PROJECTION_SEED);
    let norm = 1.0 / (raw.len() as f64).sqrt();
    let mut out = Vec::with_capacity(dim);
    for _ in 0..dim {
        let v: f64 = raw.iter().map(|r| r * rng.normal()).sum();
        out.push(v * norm);
    }
    let len = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len > 0.0 {
        for v in &mut out {
            *v /= len;
        }
    }
    FeatureVector::new(out)
}

/// Mean squared response of the 4-neighbour Laplacian over interior pixels,
/// averaged over channels.
pub fn high_frequency_energy(img: &ImageTensor) -> f64 {
    let s = img.shape();
    if s.h < 3 || s.w < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for c in 0..s.c {
        for y in 1..s.h - 1 {
            for x in 1..s.w - 1 {
                let v = |yy: usize, xx: usize| f64::from(img.get(yy, xx, c));
                let lap = v(y - 1, x) + v(y + 1, x) + v(y, x - 1) + v(y, x + 1) - 4.0 * v(y, x);
                acc += lap * lap;
            }
        }
    }
    acc / ((s.h - 2) * (s.w - 2) * s.c) as f64
}

/// Pearson and Spearman coefficients; `None` when either list is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; ties share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn metric_correlation(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::Config(format!("correlation needs at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Config("correlation inputs must be finite".into()));
    }
    Ok(Correlation {
        pearson: pearson(xs, ys),
        spearman: pearson(&ranks(xs), &ranks(ys)),
    })
}

/// Metrics of one SR image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub consistency: f64,
    pub cosine: f64,
}

/// Metrics of `sr` against its reference `hr` and low-resolution input `lr`.
pub fn evaluate_image(
    id: &str,
    sr: &ImageTensor,
    hr: &ImageTensor,
    lr: &ImageTensor,
    spec: &DegradationSpec,
    feature_dim: usize,
) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        id: id.to_string(),
        psnr: psnr(sr, hr)?,
        ssim: ssim(sr, hr)?,
        consistency: consistency(sr, lr, spec)?,
        cosine: cosine_similarity(
            &default_feature_extract(sr, feature_dim),
            &default_feature_extract(hr, feature_dim),
        )?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
    pub psnr: Aggregate,
    pub ssim: Aggregate,
    pub consistency: Aggregate,
    pub cosine: Aggregate,
}

fn csv_psnr(v: f64) -> f64 {
    v.min(PSNR_CSV_CAP)
}

impl MetricReport {
    /// Aggregates use capped PSNR so identical pairs stay finite.
    pub fn new(images: Vec<ImageMetrics>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Empty("metric records"));
        }
        let agg = |f: &dyn Fn(&ImageMetrics) -> f64| -> Result<Aggregate> {
            let v: Vec<f64> = images.iter().map(f).collect();
            let (mean, std) = mean_std(&v)?;
            Ok(Aggregate { mean, std })
        };
        Ok(Self {
            psnr: agg(&|m| csv_psnr(m.psnr))?,
            ssim: agg(&|m| m.ssim)?,
            consistency: agg(&|m| m.consistency)?,
            cosine: agg(&|m| m.cosine)?,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn write_per_image_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["image_id", "psnr_db", "ssim", "consistency_x1e4", "cosine"])
            .map_err(csv_err)?;
        for m in &self.images {
            w.write_record([
                m.id.clone(),
                format!("{}", csv_psnr(m.psnr)),
                format!("{}", m.ssim),
                format!("{}", m.consistency * CONSISTENCY_CSV_SCALE),
                format!("{}", m.cosine),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["metric", "mean", "std", "count"]).map_err(csv_err)?;
        let rows = [
            ("psnr_db", self.psnr, 1.0),
            ("ssim", self.ssim, 1.0),
            ("consistency_x1e4", self.consistency, CONSISTENCY_CSV_SCALE),
            ("cs", self.cosine, 1.0),
        ];
        for (name, a, scale) in rows {
            w.write_record([
                name.to_string(),
                format!("{}", a.mean * scale),
                format!("{}", a.std * scale),
                self.images.len().to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Malformed(format!("{other:?}")),
    }
}

/// Write `FVEC` header (magic, version, F, reserved) and little-endian f32 payload.
pub fn write_fvec(path: &Path, z: &FeatureVector) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * z.values.len());
    buf.extend_from_slice(FVEC_MAGIC);
    buf.extend_from_slice(&FVEC_VERSION.to_le_bytes());
    buf.extend_from_slice(&(z.values.len() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &v in &z.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_fvec(path: &Path) -> Result<FeatureVector> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(Error::Truncated(format!("{}: header", path.display())));
    }
    if &bytes[..4] != FVEC_MAGIC {
        return Err(Error::BadMagic { expected: "FVEC" });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FVEC_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FVEC_VERSION,
        });
    }
    let f = word(8) as usize;
    let payload = &bytes[16..];
    if payload.len() < 4 * f {
        return Err(Error::Truncated(format!("{}: expected {f} values", path.display())));
    }
    if payload.len() > 4 * f {
        return Err(Error::Malformed(format!("{}: trailing bytes", path.display())));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok(FeatureVector::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn pattern(seed: u64, shape: Shape) -> ImageTensor {
        let mut rng = RandomSource::new(seed);
        ImageTensor::from_fn(shape, |_, _, _| rng.uniform(0.0, 1.0) as f32)
    }

    #[test]
    fn psnr_examples() {
        let a = ImageTensor::filled(Shape::new(4, 4, 1), 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = ImageTensor::filled(Shape::new(4, 4, 1), 0.6);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "{p}");
        assert!(psnr(&a, &ImageTensor::zeros(Shape::new(2, 2, 1))).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = pattern(1, Shape::new(16, 16, 1));
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let bin = ImageTensor::from_fn(Shape::new(16, 16, 1), |y, x, _| ((x / 2 + y / 3) % 2) as f32);
        assert!(ssim(&bin, &bin.map(|v| 1.0 - v)).unwrap() < 0.0);
        let c = ImageTensor::filled(Shape::new(16, 16, 1), 0.5);
        let mut rng = RandomSource::new(2);
        let mut noisy = c.clone();
        for v in noisy.as_mut_slice() {
            *v += 0.01 * rng.normal() as f32;
        }
        let s = ssim(&c, &noisy).unwrap();
        assert!(s > 0.9 && s < 1.0, "{s}");
        assert!(ssim(&ImageTensor::zeros(Shape::new(8, 8, 1)), &ImageTensor::zeros(Shape::new(8, 8, 1))).is_err());
    }

    #[test]
    fn consistency_examples() {
        let spec = DegradationSpec::default();
        let lr = pattern(3, Shape::new(4, 4, 1));
        let sr = crate::resample::nearest_upsample(&lr, 4).unwrap();
        assert!(consistency(&sr, &lr, &spec).unwrap() < 1e-14);
        let shifted = sr.map(|v| v + 0.05);
        let c = consistency(&shifted, &lr, &spec).unwrap();
        assert!((c - 0.0025).abs() < 1e-8);
    }

    #[test]
    fn cosine_examples() {
        let z = FeatureVector::new(vec![0.3, -1.0, 2.0]);
        assert!((cosine_similarity(&z, &z).unwrap() - 1.0).abs() < 1e-15);
        let neg = FeatureVector::new(z.values.iter().map(|v| -v).collect());
        assert!((cosine_similarity(&z, &neg).unwrap() + 1.0).abs() < 1e-15);
        let e1 = FeatureVector::new(vec![1.0, 0.0]);
        let e2 = FeatureVector::new(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&e1, &FeatureVector::new(vec![0.0, 0.0])),
            Err(Error::ZeroVector)
        ));
        let (m, s) = average_cs(&[(e1.clone(), e1.clone()), (e1.clone(), e2)]).unwrap();
        assert_eq!((m, s), (0.5, 0.5));
        assert!(average_cs(&[]).is_err());
    }

    #[test]
    fn features_are_unit_and_rotation_sensitive() {
        let img = ImageTensor::from_fn(Shape::new(32, 32, 1), |y, x, _| (x as f32 / 31.0) * 0.8 + (y % 7) as f32 * 0.02);
        let f = default_feature_extract(&img, DEFAULT_FEATURE_DIM);
        assert_eq!(f.values.len(), 512);
        assert!((f.norm() - 1.0).abs() < 1e-9);
        assert_eq!(f, default_feature_extract(&img, DEFAULT_FEATURE_DIM));
        let rot = ImageTensor::from_fn(Shape::new(32, 32, 1), |y, x, _| img.get(31 - x, y, 0));
        let g = default_feature_extract(&rot, DEFAULT_FEATURE_DIM);
        assert!(cosine_similarity(&f, &g).unwrap() < 1.0 - 1e-6);
    }

    #[test]
    fn hf_energy_examples() {
        assert_eq!(high_frequency_energy(&ImageTensor::filled(Shape::new(8, 8, 1), 0.7)), 0.0);
        let checker = ImageTensor::from_fn(Shape::new(8, 8, 1), |y, x, _| ((x + y) % 2) as f32);
        let img = pattern(5, Shape::new(8, 8, 1));
        assert!(high_frequency_energy(&checker) > high_frequency_energy(&img));
        assert_eq!(high_frequency_energy(&checker), 16.0);
    }

    #[test]
    fn correlation_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        assert!((metric_correlation(&xs, &ys).unwrap().pearson.unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((metric_correlation(&xs, &neg).unwrap().pearson.unwrap() + 1.0).abs() < 1e-15);
        let c = metric_correlation(&xs, &[1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c, Correlation { pearson: None, spearman: None });
        assert!(metric_correlation(&xs[..2], &xs[..2]).is_err());
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn report_uses_capped_psnr_and_population_std() {
        let rec = |id: &str, p: f64| ImageMetrics {
            id: id.into(),
            psnr: p,
            ssim: 1.0,
            consistency: 0.0,
            cosine: 1.0,
        };
        let r = MetricReport::new(vec![rec("a", f64::INFINITY), rec("b", 90.0)]).unwrap();
        assert_eq!(r.psnr.mean, 95.0);
        assert_eq!(r.psnr.std, 5.0);
        assert!(MetricReport::new(vec![]).is_err());
    }

    #[test]
    fn fvec_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.fvec");
        let z = FeatureVector::new(vec![0.5, -0.25, 3.0]);
        write_fvec(&p, &z).unwrap();
        assert_eq!(read_fvec(&p).unwrap(), z);
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(20);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_fvec(&p), Err(Error::Truncated(_))));
        bytes[0] = b'X';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_fvec(&p), Err(Error::BadMagic { .. })));
    }
}
