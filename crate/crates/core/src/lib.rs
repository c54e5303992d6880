pub mod adjoint_error;
pub mod assembly;
pub mod cli;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod rom;
pub mod stochastic;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
