//! Score functions `s(x, y, t) ≈ ∇ₓ log p_t(x | y)`.

mod denoiser;
mod gaussian;

pub use denoiser::{assemble_input, input_scale, time_embedding, ArchDescriptor, DenoiserNet, ForwardCache, NetScore};
pub use gaussian::{AnalyticGaussianScore, GaussianDataSpec};

use crate::error::Result;
use crate::tensor::ImageTensor;

/// Maps a noisy state, its (upsampled) low-resolution condition and a time
/// to a score estimate of the same shape as the state.
pub trait ScoreFunction {
    fn score(&self, x: &ImageTensor, y: &ImageTensor, t: f64) -> Result<ImageTensor>;
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for &S {
    fn score(&self, x: &ImageTensor, y: &ImageTensor, t: f64) -> Result<ImageTensor> {
        (**self).score(x, y, t)
    }
}
