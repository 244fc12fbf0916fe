//! Stacked LSTM next-token model written directly on `ndarray`: forward
//! pass, backpropagation through time, dropout, a dense softmax head,
//! mini-batch training and a checksummed weight file.
//!
//! Inputs are one scalar per timestep (`index / vocab_size`); the dense head
//! reads only the top layer's last hidden state.

mod cell;
mod model;
mod params;
mod persist;
mod train;

use thiserror::Error;

pub use cell::{lstm_cell_step, sigmoid, CellCache};
pub use model::{
    backward, batch_gradient, dropout, forward, forward_trace, loss, loss_at, softmax,
    window_gradient, DropoutMasks, Mode, Trace, PROB_FLOOR,
};
pub use params::{Gate, LayerParams, ModelConfig, ModelWeights, Parameters, GATE_NAMES};
pub use persist::{
    decode_weights, encode_weights, load_weights, save_weights, summarize_weights, Header,
    TensorEntry, WeightFileSummary, FORMAT_VERSION, MAGIC,
};
pub use train::{train, Optimizer, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch for {tensor}: expected {expected:?}, found {found:?}")]
    Shape {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("weights expect {weights}, but the session provides {session}")]
    Incompatible { weights: String, session: String },
    #[error("non-finite value at {location}")]
    NonFinite { location: String },
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("weight file checksum mismatch: {0}")]
    Checksum(String),
    #[error("weight file version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
