//! Flood emulation: a cellular-automata depth oracle, terrain features,
//! design-storm rainfall, and a convolutional surrogate trained to mimic the
//! oracle's maximum-depth rasters.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod net;
pub mod pipeline;
pub mod postprocess;
pub mod rainfall;
pub mod raster;
pub mod simulator;
pub mod store;
pub mod terrain;

pub use error::{Error, Result};
