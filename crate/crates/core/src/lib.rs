//! Best spectral-norm approximation `min ‖Y − Σ aᵢXᵢ‖₂` over the reals or
//! the complex numbers, with optimality certificates, joint numerical range
//! tools and a min-max/max-min gap analysis.

pub mod certify;
pub mod error;
pub mod field;
pub mod linalg;
pub mod maxmin;
pub mod problems;
pub mod sdp;

pub use error::{Error, Result};
pub use linalg::{FieldTag, Problem, Solution};
