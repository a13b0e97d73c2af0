//! Bayesian optimization of layer-wise channel preservation ratios under a
//! FLOPs budget, searching first over clusters of structurally similar layers
//! and rolling back to the full per-layer space.

pub mod acquisition;
pub mod clustering;
pub mod controller;
pub mod environment;
pub mod error;
pub mod gp;
pub mod layer_model;
pub mod projection;
pub mod report;

pub use error::{Error, Result};
