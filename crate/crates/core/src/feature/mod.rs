//! Spectrograms, the distorted-preamble filter, the PA nonlinearity
//! quotient and rasterization into classifier images.

mod extract;
mod filter;
mod quotient;
mod raster;
pub mod store;
mod stft;

pub use extract::{analyze_capture, to_image, CaptureAnalysis, FeatureConfig};
pub use filter::{correlation_filter, pair_correlation, peak_profile, pearson, FilterOutcome, DEFAULT_THETA};
pub use quotient::{quotient, QuotientFingerprint, DEFAULT_GUARD};
pub use raster::{rasterize, spectrogram_feature, ClipRange, FeatureImage, FeatureKind};
pub use stft::{frame_count, frame_count_for, stft, Spectrogram, StftConfig, WindowKind, POWER_FLOOR};

#[cfg(test)]
mod tests;
