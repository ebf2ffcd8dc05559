//! Dense numeric core: tensors, the layers the classifier needs with
//! hand-written backward passes, optimizers and a finite-difference checker.

pub mod gradcheck;
pub mod init;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod pool;
pub mod suite;
mod tensor;

pub use gradcheck::{finite_diff_gradcheck, gradcheck_fn, relative_error, GradcheckReport};
pub use linear::{linear, linear_backward, LinearGrads};
pub use loss::{softmax, softmax_cross_entropy};
pub use lstm::{
    bilstm, bilstm_backward, lstm_cell, lstm_cell_backward, lstm_cell_forward, lstm_sequence,
    lstm_sequence_backward, BiLstmCache, BiLstmParams, LstmGrads, LstmLayerParams, LstmWeights,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, Param, ParameterSet};
pub use pool::{
    attention_pool, attention_pool_backward, max_pool_time, max_pool_time_backward,
    AttentionOutput, AttentionParams, AttentionWeights, MaxPoolOutput,
};
pub use tensor::Tensor;
