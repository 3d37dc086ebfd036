//! Dense tensors, reverse-mode differentiation, and gradient validation.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, gradient_check_params};
pub use params::{Gradients, Param, ParamId, ParamKind, ParamStore};
pub use tape::{Graph, NodeGrads, Var};
pub use tensor::{Shape, Tensor};

#[cfg(test)]
mod tests;
