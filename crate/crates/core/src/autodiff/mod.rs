//! Dense `f64` tensors with a recorded tape for reverse-mode gradients.

pub mod checkpoint;
mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck, RELATIVE_FLOOR};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::{mcp_value, sigmoid};
