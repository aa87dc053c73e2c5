// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error types shared by every module of the workbench.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Top-level error.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested kernel.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration (model config, activation name, probe config).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid user input (token ids, empty prompt sets, bad arguments).
    #[error("input error: {0}")]
    Input(String),

    /// Sequence would exceed the model's maximum context.
    #[error("capacity error: sequence of {needed} tokens exceeds max_seq_len {max}")]
    Capacity { needed: usize, max: usize },

    /// Checkpoint file could not be decoded.
    #[error("format error: {0}")]
    Format(#[from] FormatError),

    /// Two artifacts that must share an architecture or layout do not.
    #[error("compatibility error: {0}")]
    Compatibility(String),

    /// Template rendering failed.
    #[error("template error: {0}")]
    Template(String),

    /// A statistic needs more samples than were supplied.
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Relative difference against a zero baseline.
    #[error("undefined baseline: relative difference against m_u = 0")]
    UndefinedBaseline,

    /// A kernel produced NaN or infinity.
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Checkpoint decoding failures. Each corruption class has its own variant.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected TPROBE01")]
    BadMagic,

    #[error("manifest length {declared} exceeds the {available} bytes following the header")]
    ManifestLength { declared: usize, available: usize },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("tensor `{tensor}`: {detail}")]
    Shape { tensor: String, detail: String },

    #[error("tensor `{tensor}`: bad offset {offset} (length {length}, payload {payload})")]
    Offset {
        tensor: String,
        offset: usize,
        length: usize,
        payload: usize,
    },

    #[error("truncated file: payload needs {needed} bytes, found {available}")]
    Truncated { needed: usize, available: usize },
}
