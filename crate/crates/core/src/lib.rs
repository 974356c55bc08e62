//! Wavelet-integrated 1D convolutional autoencoder for ECG denoising.
//!
//! The crate is organised bottom-up:
//!
//! - [`wavelet`]: Daubechies-6 filter bank and periodic DWT/IDWT.
//! - [`nnlayers`]: rank-3 tensors and differentiable layers (conv, transpose
//!   conv, batch norm, ELU, dropout, DWT/IDWT layers) with checkpoint I/O.
//! - [`architecture`]: FCN baseline and forward/backward/all-wavelet variants.
//! - [`dataset`]: WFDB-212 and plain-format ingestion, preprocessing, windowing,
//!   normalization, noise mixing and split construction.
//! - [`training`]: MSE loss, Adam, the epoch loop and ablation runs.
//! - [`evaluation`]: RMSE / SNR improvement / PRD and report emission.
//!
//! Batch-level work is parallelised with rayon when the `parallel` feature is
//! enabled (default). Work is always partitioned into fixed-size groups and
//! reduced in a fixed order, so the parallel and sequential paths produce
//! bit-identical results. See [`par`].

pub mod architecture;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod nnlayers;
pub mod par;
pub mod rng;
pub mod training;
pub mod wavelet;

pub use error::{Error, Result};
