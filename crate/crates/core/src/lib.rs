//! Spatially-sparse convolutional autoencoders for 2-, 3- and 4-dimensional
//! sparse data.

pub mod autograd;
pub mod commands;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod tensor;

pub use error::{Error, ExitKind, Result};
pub use tensor::{Coord, DenseTensor, Geometry, Sites, SparseTensor};
