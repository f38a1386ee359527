//! Trajectory prediction over multiple interaction graphs, conditioned on the
//! ego agent's planned path.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! wall-clock timing live in the `plangraph` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod ablation;
pub mod autograd;
pub mod error;
pub mod gradcheck;
pub mod graphs;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod scene;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod whatif;

pub use error::{Error, Result};
pub use graphs::{AdjacencySet, GraphKind};
pub use model::{Model, ModelConfig, PreparedSample, Predictions};
pub use scene::{Category, DatasetConfig, Sample, Vec2};
pub use tensor::Tensor;
pub use train::{TrainConfig, Trainer};
