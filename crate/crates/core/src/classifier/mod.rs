//! Small CNN with hand-written reverse-mode gradients.

mod gradcheck;
pub mod layers;
mod model;
mod network;
mod posterior;
mod real;
mod train;

pub use gradcheck::{gradient_check, relative_error, GradientReport, FD_STEP};
pub use model::{Provenance, TrainedModel, TrainingSet};
pub(crate) use model::split_header;
pub use network::{ArchSpec, BlockSpec, Grads, Head, Network, FC_INIT_SCALE};
pub use posterior::PosteriorMatrix;
pub use real::Real;
pub use train::{write_log_csv, Adam, EpochLog, TrainHyper};
