// SPDX-License-Identifier: MIT OR Apache-2.0

//! Decoder-only transformer: config, parameters, file format, forward pass
//! and greedy generation.

mod checkpoint;
mod config;
mod format;
mod forward;
mod generate;
mod rope;

pub use checkpoint::{expected_shape, tensor_names, Checkpoint, LayerWeights};
pub use config::ModelConfig;
pub use format::{
    from_bytes, load_checkpoint, read_manifest, save_checkpoint, to_bytes, Manifest, TensorEntry,
    MAGIC,
};
pub use forward::{forward, TraceRecord};
pub use generate::{argmax, generate_greedy, GenerationOutput, StepTrace};
pub use rope::{apply_rope, inverse_frequencies};
