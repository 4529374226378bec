//! Dense tensors, a reverse-mode tape covering the layers the networks use,
//! and the Adam optimizer.

mod adam;
mod kernels;
mod tape;
mod tensor;

pub use adam::Adam;
pub use tape::{Gradients, Mode, Tape, Var};
pub use tensor::{ParamId, ParamSet, Tensor};
