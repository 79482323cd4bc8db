//! Backstepping observers and output feedback for large `n+m` hyperbolic
//! systems, with gains computed once from the continuum (`n → ∞`) system.

pub mod control;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod model;
pub mod numerics;
pub mod sim;

pub use error::{Error, Result};
