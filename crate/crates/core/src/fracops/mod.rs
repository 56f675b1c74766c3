//! Discrete fractional and mixed local-nonlocal operators.

mod grid_function;
pub mod kernel;
mod operator;
pub mod oracle;

pub use grid_function::GridFunction;
pub use kernel::{normalizing_constant, ring_kernel, FractionalKernelSpec, S_MAX, S_MIN};
pub use operator::{assemble_fractional, assemble_laplacian, assemble_mixed, DiscreteOperator, OperatorKind};
pub use oracle::pointwise_oracle;
