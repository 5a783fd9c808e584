//! Continuous-time score-based diffusion (VE / VP / subVP SDEs) for
//! conditional image super-resolution.

pub mod dataio;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod resample;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::RandomSource;
pub use sde::{integrate_moment_odes, MarginalMoments, NoiseSchedule, SdeKind, SdeModel};
pub use tensor::{ImageTensor, Shape};
