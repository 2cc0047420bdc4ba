//! Dense tensors, reverse-mode gradients, optimizers and schedules.

mod checkpoint;
pub mod gradcheck;
pub mod ops;
mod optim;
mod param;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use ops::{cross_entropy_loss, dropout, matmul, softmax_with_temperature, CrossEntropy};
pub use optim::{cosine_anneal, Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use param::{glorot_uniform, ParamId, ParamSet, Parameter};
pub use tape::{BoundParams, Gradients, Message, MessageList, Tape, Var};
pub use tensor::{argmax, Tensor};

#[cfg(test)]
mod gradient_tests;
