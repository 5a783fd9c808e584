use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    Domain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite {what} at step {step:?}, t = {t}")]
    NonFinite {
        what: &'static str,
        step: Option<usize>,
        t: f64,
    },

    #[error("non-finite loss for t values {0:?}")]
    NonFiniteLoss(Vec<f64>),

    #[error("training diverged at step {step}: loss {loss:.6e} vs running median {median:.6e}")]
    Diverged { step: usize, loss: f64, median: f64 },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a step index to a `NonFinite` error raised inside a single step.
    pub(crate) fn at_step(self, index: usize) -> Self {
        match self {
            Error::NonFinite { what, t, .. } => Error::NonFinite {
                what,
                step: Some(index),
                t,
            },
            other => other,
        }
    }
}
