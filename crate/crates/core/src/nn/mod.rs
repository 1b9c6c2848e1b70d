//! Small recurrent-network engine: LSTM, multiplicative LSTM and GRU cells,
//! dense and embedding layers, exact backpropagation through time, Adam,
//! gradient clipping, finite-difference checking and model persistence.
//!
//! All arithmetic is `f64`. Randomness only enters through caller-provided
//! RNGs, so a fixed seed reproduces parameters bit for bit.

pub mod adam;
pub mod cells;
pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod models;
pub mod params;
pub mod persist;
pub mod seq;

pub use adam::{AdamConfig, AdamState};
pub use cells::{gru_step, lstm_step, mlstm_step, Cell, CellKind, CellState, GruCellParams, LstmCellParams, MlstmCellParams};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{DenseParams, EmbeddingTable};
pub use matrix::Matrix;
pub use models::{
    backward_pass, Differentiable, InputLayer, LanguageModel, LinearRegressor, LmSequence, Loss, RegressionExample,
    SequenceRegressor,
};
pub use params::{clip_gradients_by_norm, global_norm, ParamSet};
pub use persist::ModelFile;
pub use seq::{run_bidirectional, run_sequence};
