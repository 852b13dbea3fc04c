//! The chunked recurrent generator and its cross-chunk memory.
//!
//! The context is processed chunk by chunk with one gated recurrent cell whose
//! hidden state carries across chunk boundaries. At every boundary the memory
//! vector is refreshed by attending over the hidden states of the chunk just
//! finished, and inside a chunk it is added to every input embedding. The
//! summary is teacher-forced (or decoded) as one further segment after the
//! context.

mod cell;
mod checkpoint;
mod decode;
mod forward;
mod memory;
mod params;
mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{recurrent_cell, CellStep};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use decode::{greedy_decode, sample_decode, DecodeState};
pub use forward::{encode_sequence, encode_traced, forward, forward_stream, ForwardTrace};
pub use memory::{memory_update, MemoryState, MemoryUpdate};
pub use params::{tensor_layout, ModelParams, INIT_RANGE, TENSOR_COUNT};
pub use tensor::{dot, log_sum_exp, sigmoid, softmax, Tensor};

pub(crate) use cell::cell_step;
pub(crate) use memory::memory_step;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("tensor {0} has non-finite entries")]
    NonFinite(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("memory update over an empty chunk")]
    EmptyChunk,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("invalid chunks: {0}")]
    InvalidChunks(String),
    #[error("token id {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Switches that remove one mechanism each, for ablation runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Keep the memory identically zero.
    pub disable_memory: bool,
    /// Assemble contexts without extracted key elements.
    pub disable_key_extraction: bool,
    /// Train with the comparative term switched off (effective lambda 0).
    pub disable_comparative: bool,
}

impl AblationFlags {
    pub(crate) fn to_bits(self) -> u8 {
        u8::from(self.disable_memory)
            | u8::from(self.disable_key_extraction) << 1
            | u8::from(self.disable_comparative) << 2
    }

    pub(crate) fn from_bits(bits: u8) -> Option<Self> {
        if bits & !0b111 != 0 {
            return None;
        }
        Some(Self {
            disable_memory: bits & 1 != 0,
            disable_key_extraction: bits & 2 != 0,
            disable_comparative: bits & 4 != 0,
        })
    }
}
