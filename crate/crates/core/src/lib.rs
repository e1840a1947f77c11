//! Simulated radio-frequency-fingerprint identification testbed.
//!
//! Virtual LoRa transmitters with individual power-amplifier nonlinearities
//! send consecutive high- and low-power preambles through time-varying
//! channels. The element-wise ratio of their spectrograms (the PA
//! nonlinearity quotient) cancels the channel and serves as a fingerprint
//! for small CNN classifiers trained from scratch or by transfer learning.
//! On top of that the crate models impersonation and enrollment
//! contamination attacks and detects the latter from the difference of the
//! two classifiers' posterior probabilities with a one-class SVM.

pub mod attacks;
pub mod classifier;
pub mod detection;
mod error;
pub mod feature;
pub mod grid;
pub mod harness;
pub mod par;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
