//! Noise-adapted speaker identification from gammatone cochleagrams.
//!
//! The crate is organised along the processing chain:
//!
//! * [`signal`]: WAV I/O, resampling, energy VAD and power measurement.
//! * [`corruption`]: generated and recorded noise, mixing at a target SNR,
//!   synthetic reverberation and center/peak clipping.
//! * [`gammatone`]: the ERB-spaced gammatone filterbank, framed log-energy
//!   cochleagrams and fixed-size feature images.
//! * [`nn`]: a small convolutional classifier written from scratch, with
//!   SGD-with-momentum training and finite-difference gradient checking.
//! * [`experiment`]: manifests, a synthetic speaker corpus, noise-adapted
//!   training sets and evaluation grids.

mod biquad;
pub mod corruption;
pub mod error;
pub mod experiment;
pub mod gammatone;
mod matrix;
pub mod nn;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use signal::AudioClip;
