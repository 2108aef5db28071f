//! Joint training of a bag-level relation extractor and a complex-valued
//! knowledge-base embedding model.

pub mod adam;
pub mod benchmark;
pub mod commands;
pub mod config;
pub mod distribution;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kb;
pub mod kbe;
pub mod linalg;
pub mod plot;
pub mod supervision;
pub mod training;

pub use error::{Error, Result};
