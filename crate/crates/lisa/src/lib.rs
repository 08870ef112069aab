//! Spectral forecasting of dynamical systems with in-context residual adapters.
//!
//! The pipeline: simulate a trajectory, delay-embed it into windows, learn a
//! diffusion-map latent space over the windows, fit a GP decoder from latent
//! coordinates back to observables, then forecast by stepping in latent space.
//! At inference time a context buffer of recent observations can correct the
//! frozen decoder through a GP posterior on its residuals (LISA) or through a
//! kernel-weighted residual average (ALSA); neither touches trained weights.

pub mod dynsys;
pub mod error;
pub mod gplm;
pub mod hankel;
pub mod harness;
pub mod icm;
pub mod icpca;
pub(crate) mod linalg;
pub mod metrics;
pub mod rollout;
pub mod series;
pub mod spectral;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use series::TimeSeries;
