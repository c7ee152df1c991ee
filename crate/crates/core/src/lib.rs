//! Sentence ordering with iteratively refined sentence-entity graphs.

pub mod data;
pub mod decode;
pub mod diffkernel;
pub mod encode;
pub mod error;
pub mod eval;
pub mod graph;
pub mod grn;
pub mod model;
pub mod refine;
pub mod train;

pub use error::{Error, Result};
