//! Functional segmentation of statistical research code.
//!
//! Lines are labeled with one of seven analysis stages, either one at a time
//! from a context window or for a whole file at once as labeled line ranges,
//! and consecutive equally labeled lines form segments.

pub mod backends;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod label;
pub mod pipeline;
pub mod preprocess;
pub mod prompt;
pub mod rangeseg;
pub mod segment;
pub mod window;

pub use error::{Error, Result};
pub use label::Label;
