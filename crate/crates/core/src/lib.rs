//! Homogenized coefficients of random lattice media and variance-reduced
//! Monte Carlo estimators for them.

pub mod cell;
pub mod error;
pub mod estimators;
pub mod field;
pub mod linalg;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Entry, Tensor2};
