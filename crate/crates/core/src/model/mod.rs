//! Trainable encoder, projection head and classifier.

pub mod checkpoint;
mod config;
mod layers;
mod network;
mod params;

pub use config::{conv_out, BlockConfig, ModelConfig};
pub use network::{EmbeddingBatch, FeatureBatch, Mode, Model, SslOutcome};
pub use params::{init_params, to_f32_grid, EntryKind, Gradients, ParamEntry, ParamStore};
