//! Simulator and optimization library for closed-loop radiative wireless
//! power transfer with adaptive multi-sine waveforms and multi-antenna
//! beamforming.
//!
//! The crate is organized bottom-up:
//!
//! - [`signal`]: tone grid, weight vectors, waveform synthesis and closed-form moments
//! - [`channel`]: tapped-delay-line multipath channel realizations
//! - [`rectenna`]: RF-to-dc conversion models and the ADC measurement path
//! - [`strategies`]: uniform power, scaled matched filter, codeword selection
//! - [`codebook`]: codebook generation, Lloyd-style training and file IO
//! - [`protocol`]: frame-level training/feedback/WPT simulation
//! - [`harness`]: campaign sweeps, CSV output and configuration
//!
//! All randomness flows through [`rng`], which derives independent ChaCha8
//! streams from a seed and a stream identifier.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod harness;
pub mod protocol;
pub mod rectenna;
pub mod rng;
pub mod signal;
pub mod strategies;

pub use error::{Error, Result};
pub use num_complex::Complex64;
