//! Differentiable numerical primitives, parameter storage, optimizer and
//! gradient checking.

pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_store, relative_error, GradCheckReport};
pub use lstm::{bilstm_forward, lstm_backward, lstm_forward, BiLstm, BiLstmCache, LstmCache, LstmGrads, LstmWeights};
pub use ops::{
    bilinear_score, bilinear_scores, bilinear_scores_backward, classify, cross_entropy, cross_entropy_backward, dropout,
    embed_lookup, embed_lookup_backward, entropy, guidance_loss, guidance_loss_backward, linear, linear_backward,
    sigmoid, softmax, softmax_backward, weighted_sum, weighted_sum_backward, BilinearGrads, DropoutMask, LOG_FLOOR,
};
pub use optim::sgd_momentum_step;
pub use params::{GradBuffer, ParamId, ParamStore};
pub use rng::RngState;
pub use tensor::Tensor;
