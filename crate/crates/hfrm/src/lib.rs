//! File formats, training loop and command-line workflows around
//! `hfrm-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod ppm;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use dataset::Sample;
pub use error::{Error, Result};
pub use train::Trainer;
