//! Image resampling used by the degradation pipeline and the consistency
//! metric.

use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

/// Keys cubic convolution kernel with `a = −0.5`.
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x < 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index `(first source index, weights)` for one axis, with
/// pixel-centre alignment, replicated borders and a kernel widened by the
/// scale factor when shrinking.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    let stretch = scale.max(1.0);
    let support = 2.0 * stretch;
    (0..dst)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for i in lo..=hi {
                let wgt = cubic_kernel((i as f64 - center) / stretch);
                if wgt == 0.0 {
                    continue;
                }
                let idx = i.clamp(0, src as isize - 1) as usize;
                match taps.iter_mut().find(|(j, _)| *j == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Bicubic resize to `h × w`. Constants are preserved exactly up to
/// rounding; values may overshoot `[0, 1]` near edges.
pub fn resize_bicubic(img: &ImageTensor, h: usize, w: usize) -> Result<ImageTensor> {
    let out = resize_bicubic_f64(img, h, w)?;
    ImageTensor::new(Shape::new(h, w, img.shape().c), out.into_iter().map(|v| v as f32).collect())
}

/// [`resize_bicubic`] without the final rounding to `f32`; `h × w × c` values.
pub fn resize_bicubic_f64(img: &ImageTensor, h: usize, w: usize) -> Result<Vec<f64>> {
    let s = img.shape();
    if h == 0 || w == 0 || s.is_empty() {
        return Err(Error::Shape(format!("cannot resize {s} to {h}x{w}")));
    }
    let wx = axis_weights(s.w, w);
    let wy = axis_weights(s.h, h);
    let c = s.c;
    let src = img.as_slice();
    let mut tmp = vec![0.0f64; s.h * w * c];
    for y in 0..s.h {
        for (x, taps) in wx.iter().enumerate() {
            for ch in 0..c {
                tmp[(y * w + x) * c + ch] = taps
                    .iter()
                    .map(|&(i, wt)| wt * f64::from(src[(y * s.w + i) * c + ch]))
                    .sum();
            }
        }
    }
    let mut out = vec![0.0f64; h * w * c];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..w {
            for ch in 0..c {
                out[(y * w + x) * c + ch] = taps.iter().map(|&(i, wt)| wt * tmp[(i * w + x) * c + ch]).sum();
            }
        }
    }
    Ok(out)
}

fn check_factor(s: Shape, factor: usize) -> Result<()> {
    if factor < 1 || s.h % factor != 0 || s.w % factor != 0 {
        return Err(Error::Shape(format!("factor {factor} does not divide {s}")));
    }
    Ok(())
}

/// Mean over non-overlapping `factor × factor` blocks.
pub fn area_downsample(img: &ImageTensor, factor: usize) -> Result<ImageTensor> {
    let s = img.shape();
    let out = area_downsample_f64(img, factor)?;
    ImageTensor::new(
        Shape::new(s.h / factor, s.w / factor, s.c),
        out.into_iter().map(|v| v as f32).collect(),
    )
}

/// [`area_downsample`] without the final rounding to `f32`.
pub fn area_downsample_f64(img: &ImageTensor, factor: usize) -> Result<Vec<f64>> {
    let s = img.shape();
    check_factor(s, factor)?;
    let (h, w) = (s.h / factor, s.w / factor);
    let norm = (factor * factor) as f64;
    let mut out = vec![0.0f64; h * w * s.c];
    for y in 0..h {
        for x in 0..w {
            for c in 0..s.c {
                let mut acc = 0.0f64;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += f64::from(img.get(y * factor + dy, x * factor + dx, c));
                    }
                }
                out[(y * w + x) * s.c + c] = acc / norm;
            }
        }
    }
    Ok(out)
}

/// Pixel replication by `factor`.
pub fn nearest_upsample(img: &ImageTensor, factor: usize) -> Result<ImageTensor> {
    if factor < 1 {
        return Err(Error::Shape("upsampling factor must be positive".into()));
    }
    let s = img.shape();
    let out = Shape::new(s.h * factor, s.w * factor, s.c);
    Ok(ImageTensor::from_fn(out, |y, x, c| img.get(y / factor, x / factor, c)))
}
