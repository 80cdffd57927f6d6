//! Surrogate-gradient training: losses, backpropagation through time, and
//! the AdamW optimizer.

mod adamw;
mod batch;
mod bptt;
mod loss;
mod surrogate;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState};
pub use batch::{batch_gradients, batch_gradients_seq, BatchResult, GRAD_CHUNK};
pub use bptt::{backward_bptt, GradientSet};
pub use loss::{mem_loss, sample_loss, softmax, spike_loss, LossSpec, LossWeights};
pub use surrogate::{surrogate_derivative, SurrogateConfig};
