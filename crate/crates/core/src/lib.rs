//! Local geometry of continuous piecewise-linear (CPWL) generative networks.
//!
//! For a CPWL generator `G: ℝ^E → ℝ^D` the input space splits into convex
//! regions on which `G(z) = A z + b`. This crate extracts that affine map
//! exactly and summarizes it with three descriptors:
//!
//! * local scaling ψ: `Σ log σᵢ` over the non-zero singular values of `A`,
//! * local rank ν: exponentiated entropy of the normalized singular values,
//! * local complexity δ: number of knots inside a small ℓ1-ball around `z`.
//!
//! The geometry core ([`linalg`], [`net`], [`descriptors`], [`partition2d`])
//! is generic over the scalar type; the aliases below fix it to `f64` or
//! `f32`. Training ([`models`]), statistics ([`analysis`]) and descriptor
//! guidance ([`guidance`]) work in `f64`.

pub mod analysis;
pub mod descriptors;
pub mod error;
pub mod guidance;
pub mod linalg;
pub mod models;
pub mod net;
pub mod parallel;
pub mod partition2d;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Network64 = net::CpwlNetwork<f64>;
pub type Network32 = net::CpwlNetwork<f32>;
pub type AffineMap64 = net::AffineMap<f64>;
pub type ConditionedNetwork64 = net::ConditionedNetwork<f64>;
pub type ComplexityConfig64 = descriptors::ComplexityConfig<f64>;
pub type DescriptorTriple64 = descriptors::DescriptorTriple<f64>;
pub type Slice2D64 = partition2d::Slice2D<f64>;
pub type SlicePartition64 = partition2d::SlicePartition<f64>;
