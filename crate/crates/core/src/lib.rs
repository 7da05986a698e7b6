//! Link-level simulation and closed-form analysis of multi-cell massive MIMO
//! downlink with one-bit ADCs/DACs and zero-forcing precoding.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: geometry, large-scale fading and system constants.
//! - [`quantization`]: the one-bit quantizer, Bussgang gains and the arcsin law.
//! - [`rng`] and [`channel`]: counter-based random streams and Rayleigh channel draws.
//! - [`estimation`]: quantized uplink training and MMSE channel estimates.
//! - [`precoding`]: ZF precoders and the quantized transmit signal.
//! - [`rates`]: Monte-Carlo and closed-form ergodic rates.
//! - [`analysis`]: antenna-ratio search and the energy-efficiency model.
//! - [`config`], [`sweep`] and [`validate`]: the experiment runner surfaced by the CLI.

pub mod analysis;
pub mod channel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod precoding;
pub mod quantization;
pub mod rates;
pub mod rng;
pub mod scenario;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex matrix type used for channels, estimates and precoders.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
