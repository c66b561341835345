//! CPU Gaussian-splatting engine with a post-hoc, per-primitive,
//! view-dependent uncertainty channel.
//!
//! The pipeline: fit a small 3DGS scene photometrically ([`fitter`]),
//! freeze it, compute training residuals ([`photometric`]), fit spherical
//! harmonic uncertainty coefficients against those residuals as a linear
//! least-squares problem ([`solver`]), then render, evaluate
//! ([`metrics`]), select views ([`avs`]) or attenuate downstream change
//! maps ([`guidance`]).

pub mod avs;
pub mod cli;
pub mod fitter;
pub mod grad;
pub mod guidance;
pub mod image;
pub mod metrics;
pub mod photometric;
pub mod quadrature;
pub mod raster;
pub mod scene;
pub mod sh;
pub mod solver;
pub mod synth;

use std::sync::Once;

static INIT_THREADS: Once = Once::new();

/// Installs the global rayon pool, honoring `SPLAT_UNCERT_THREADS`.
/// Safe to call more than once; only the first call has an effect.
pub fn init_threads() {
    INIT_THREADS.call_once(|| {
        if let Ok(v) = std::env::var("SPLAT_UNCERT_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global();
            }
        }
    });
}

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
