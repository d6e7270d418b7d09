//! Tape-based reverse-mode differentiation, losses and optimizers.

pub mod loss;
pub mod optim;
pub mod params;
pub mod tape;

pub use loss::{
    argmax_rows, cross_entropy, cross_entropy_masked, hierarchical_loss, hierarchical_loss_seeds, mse_loss, softmax,
    sparsifier_loss, LossReport, LossWeights,
};
pub use optim::{optimizer_by_name, Adam, OptimConfig, Optimizer, Sgd, OPTIMIZERS};
pub use params::{Param, ParamGrads, ParamId, ParamStore};
pub use tape::{GradFn, Gradients, Tape, Var};
