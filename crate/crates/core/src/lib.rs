//! Differentiable tensor core and the histogram-transformer restoration
//! network built on it.

#![no_std]
extern crate alloc;

pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod weather;

pub use error::{Error, Result};
pub use model::{Model, NetConfig};
pub use ops::conv::{ConvMode, ConvSpec};
pub use ops::sort::SortIndex;
pub use params::{Bound, Init, ParameterStore};
pub use rng::SeededRng;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
