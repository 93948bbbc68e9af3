//! Neural collaborative filtering as rating classification, with a
//! reliability value attached to every predicted rating.

pub mod dataset;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod reliability;
pub mod rng;

pub use error::{Error, Result};
