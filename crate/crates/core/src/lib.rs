//! Federated coupled nonnegative CP decomposition.
//!
//! Each client holds a private nonnegative tensor. Components that are coupled
//! across clients ("public" components) are pulled toward a global model kept
//! by a central server through an elastic penalty, while the remaining
//! ("private") components never leave the client. Only coupled-mode factor
//! columns are ever transmitted.

pub mod cp;
pub mod error;
pub mod factors;
pub mod federation;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod selection;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use factors::{init_factors, FactorSet};
pub use matrix::Matrix;
pub use tensor::{fold, unfold, DenseTensor};
