//! Dense linear algebra and seeded randomness.

mod matrix;
mod ortho;
pub mod rng;
mod svd;

pub use matrix::{dot, norm, Matrix};
pub use ortho::{orthonormalize_rows, random_orthonormal};
pub use svd::{singular_values, svd, SvdResult};
