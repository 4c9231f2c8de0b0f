//! Dense neural-network core: the LSTM cell with exact (non-truncated)
//! backpropagation through time, stable softmax cross-entropy, parameter
//! initialization, the Adam optimizer, and a binary checkpoint container.
//!
//! Everything is generic over [`Real`] so the production path can run in
//! single precision while tests instantiate `f64` for tight tolerances.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod lstm;
pub mod par;
pub mod real;

pub use adam::{Adam, AdamConfig, StepOutcome};
pub use loss::{sequence_loss, softmax_project, softmax_rows_inplace};
pub use lstm::{lstm_step, GateValues, LstmGrads, LstmParams, LstmState, SeqCache};
pub use real::Real;
