//! Procedural grayscale toy faces.

use super::{DatasetHandle, DatasetSource};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::{ImageTensor, Shape};

/// Stream offset used for held-out faces so they never coincide with
/// training faces drawn under the same seed.
pub const TEST_STREAM: u64 = 1 << 63;

/// Coverage in `[0, 1]` of a pixel whose signed distance to an edge is `d`
/// (negative inside), with a one-pixel ramp.
fn coverage(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

/// One face drawn from `rng`: ellipse head over a background gradient, two
/// eye blobs and a mouth arc, optionally with `N(0, 0.01²)` pixel noise.
pub fn render_face(shape: Shape, rng: &mut RandomSource, noise: bool) -> ImageTensor {
    let (h, w) = (shape.h as f64, shape.w as f64);
    let bg = rng.uniform(0.05, 0.3);
    let grad_angle = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
    let grad_amp = rng.uniform(0.0, 0.15);
    let cx = w * rng.uniform(0.42, 0.58);
    let cy = h * rng.uniform(0.42, 0.58);
    let ax = w * rng.uniform(0.24, 0.34);
    let ay = h * rng.uniform(0.32, 0.42);
    let skin = rng.uniform(0.55, 0.9);
    let eye_dx = ax * rng.uniform(0.3, 0.45);
    let eye_y = cy - ay * rng.uniform(0.15, 0.35);
    let eye_r = ax * rng.uniform(0.1, 0.18);
    let eye_depth = rng.uniform(0.3, 0.5);
    let mouth_y = cy + ay * rng.uniform(0.35, 0.5);
    let mouth_half = ax * rng.uniform(0.3, 0.5);
    let mouth_curve = ay * rng.uniform(-0.12, 0.2);
    let mouth_thick = rng.uniform(0.6, 1.2);
    let mouth_depth = rng.uniform(0.25, 0.45);

    let mut img = ImageTensor::from_fn(Shape::new(shape.h, shape.w, 1), |y, x, _| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let u = (px / w - 0.5) * grad_angle.cos() + (py / h - 0.5) * grad_angle.sin();
        let mut v = bg + grad_amp * u;

        let (ex, ey) = ((px - cx) / ax, (py - cy) / ay);
        let r = (ex * ex + ey * ey).sqrt();
        // Distance to the ellipse boundary in pixels, first-order.
        let d_head = (r - 1.0) * ax.min(ay);
        v += (skin - v) * coverage(d_head);

        for side in [-1.0, 1.0] {
            let dx = px - (cx + side * eye_dx);
            let dy = py - eye_y;
            let q = (dx * dx + dy * dy) / (eye_r * eye_r);
            v -= eye_depth * (-q).exp() * coverage(d_head);
        }

        let t = (px - cx) / mouth_half;
        if t.abs() <= 1.0 {
            let arc_y = mouth_y + mouth_curve * (1.0 - t * t);
            let d_mouth = (py - arc_y).abs() - mouth_thick;
            v -= mouth_depth * coverage(d_mouth) * coverage(d_head);
        }
        v as f32
    });
    if noise {
        let mut z = vec![0.0f32; img.len()];
        rng.fill_normal(&mut z);
        for (p, n) in img.as_mut_slice().iter_mut().zip(z) {
            *p += 0.01 * n;
        }
    }
    img.clamp01();
    img
}

fn faces_from_stream(n: usize, shape: Shape, seed: u64, stream: u64, noise: bool) -> Result<DatasetHandle> {
    if shape.h < 16 || shape.w < 16 {
        return Err(Error::Shape(format!("synthetic faces need at least 16x16, got {shape}")));
    }
    if shape.c != 1 {
        return Err(Error::Shape(format!("synthetic faces are grayscale, got {} channels", shape.c)));
    }
    let images = (0..n)
        .map(|i| render_face(shape, &mut RandomSource::derived(seed, stream.wrapping_add(i as u64)), noise))
        .collect();
    Ok(DatasetHandle {
        source: DatasetSource::Synthetic { seed, stream },
        shape,
        images,
        names: (0..n).map(|i| format!("face_{i:05}")).collect(),
        rejected: Vec::new(),
    })
}

/// `n` faces; image `i` is drawn from its own stream derived from `seed`.
pub fn synth_faces(n: usize, shape: Shape, seed: u64, noise: bool) -> Result<DatasetHandle> {
    faces_from_stream(n, shape, seed, 0, noise)
}

/// 90/10 train/test split of `n` faces; test faces come from the disjoint
/// [`TEST_STREAM`] range.
pub fn synth_split(n: usize, shape: Shape, seed: u64, noise: bool) -> Result<(DatasetHandle, DatasetHandle)> {
    let n_test = n / 10;
    Ok((
        faces_from_stream(n - n_test, shape, seed, 0, noise)?,
        faces_from_stream(n_test, shape, seed, TEST_STREAM, noise)?,
    ))
}
