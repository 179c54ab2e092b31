//! Pairwise-constrained Gaussian RBM (pcGRBM) feature learning, the
//! clustering pipelines that consume its hidden features, and rank-based
//! evaluation statistics.

pub mod cli;
pub mod clustering;
pub mod data;
pub mod error;
pub mod eval;
pub mod grbm;
pub mod model_io;
pub mod pcgrbm;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
