//! Self-supervised (VICReg) representation learning for bioacoustic audio,
//! with a downstream species-classification protocol.

pub mod audio;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod vicreg;

pub use error::{Error, Result};
