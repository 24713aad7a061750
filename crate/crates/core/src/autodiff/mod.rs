//! Minimal reverse-mode differentiation: dense and sparse kernels, Glorot
//! initialisation, and Adam.

mod optim;
mod params;
mod sparse;
mod tape;
mod tensor;

pub use optim::{adam_step, xavier_bound, xavier_init, xavier_init_with, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::softmax_in_place;
