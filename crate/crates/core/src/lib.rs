//! Occlusion-robust image recognition with generalized gradient-direction
//! features and a hierarchical adaptive sparse + low-rank regression solved
//! by ADMM.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gradfeat;
pub mod imagekit;
pub mod solver;

pub use error::{Error, Result};
