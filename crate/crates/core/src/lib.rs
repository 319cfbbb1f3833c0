//! Quantization of completely integrable systems in action-angle variables
//! on the torus: truncated Fourier representations, polarized and prequantum
//! operators, spectra and evolution, parameter-path holonomy, and classical
//! reference integration.

pub mod classical;
pub mod error;
pub mod expr;
pub mod fourier;
pub mod holonomy;
pub mod quantum;
pub mod spectra;

pub use error::{Error, Result};
