pub mod baseline;
pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod prepare;
pub mod selftrain;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
