//! Knowledge-graph denoising by learning a compact, type-consistent core
//! with a masked relational graph auto-encoder.

pub mod autodiff;
pub mod cli;
pub mod detector;
pub mod error;
pub mod graph;
pub mod masker;
pub mod model;
pub mod reconstructor;
pub mod rgcn;
pub mod trainer;

pub use error::{Error, Result};
