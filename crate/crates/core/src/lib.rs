pub mod blur_inference;
pub mod blur_synth;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod flow_prop;
pub mod image;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod mgst;
pub mod pipeline;
pub mod resample;

pub use error::{Error, Result};
