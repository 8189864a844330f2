//! Local scaling ψ, local rank ν and local complexity δ of a CPWL map.
//!
//! ψ and ν depend only on the singular values of the local slope; δ counts
//! the knots (neurons whose pre-activation changes sign) inside a small
//! ℓ1-ball around the query point, probed at the ball's vertices.

mod grid;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{random_orthonormal, singular_values, Matrix};
use crate::net::{ActivationPattern, PiecewiseAffine};
use crate::scalar::Scalar;

pub use grid::{descriptor_grid, DescriptorGrid, GridSpec};

/// Constant added to each normalized singular value in the smooth rank.
pub const RANK_EPSILON: f64 = 1e-30;

/// Relative cutoff for treating a singular value as non-zero:
/// `σ > max(m, n) · σ_max · NONZERO_RTOL`.
pub const NONZERO_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult<T> {
    /// Natural-log volume change `Σ log σᵢ` over non-zero σ.
    pub psi: T,
    pub nonzero_count: usize,
    pub singular_values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankResult<T> {
    pub nu: T,
    pub alphas: Vec<T>,
}

/// Frame and radius of the neighborhood `V_z = {x : ‖B(x − z)‖₁ < r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityConfig<T> {
    frame: Matrix<T>,
    radius: T,
}

impl<T: Scalar> ComplexityConfig<T> {
    /// `frame` is `P × E` with orthonormal rows, `radius > 0`.
    pub fn new(frame: Matrix<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidInput("complexity radius must be positive".into()));
        }
        if frame.rows() == 0 || frame.rows() > frame.cols() {
            return Err(Error::InvalidInput("frame must be P×E with 1 ≤ P ≤ E".into()));
        }
        if frame.row_orthonormality_error() > T::lit(1e-8) {
            return Err(Error::InvalidInput("complexity frame is not orthonormal".into()));
        }
        Ok(ComplexityConfig { frame, radius })
    }

    /// `P = E`, `B = I` (the default for 2-D toys).
    pub fn full(input_dim: usize, radius: T) -> Result<Self> {
        Self::new(Matrix::identity(input_dim), radius)
    }

    /// Random orthonormal `P × E` frame.
    pub fn random(p: usize, input_dim: usize, radius: T, seed: u64) -> Result<Self> {
        Self::new(random_orthonormal(p, input_dim, seed)?, radius)
    }

    /// Four-dimensional neighborhood of radius 1e-5 in a random frame, or the
    /// full space when the latent has at most four dimensions.
    pub fn default_for(input_dim: usize, seed: u64) -> Result<Self> {
        let r = T::lit(1e-5);
        if input_dim <= 4 {
            Self::full(input_dim, r)
        } else {
            Self::random(4, input_dim, r, seed)
        }
    }

    pub fn frame(&self) -> &Matrix<T> {
        &self.frame
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn subspace_dim(&self) -> usize {
        self.frame.rows()
    }

    pub fn with_radius(&self, radius: T) -> Result<Self> {
        Self::new(self.frame.clone(), radius)
    }

    /// Center plus the `2P` vertices `z ± r·bᵢ` of the ℓ1-ball.
    pub fn probes(&self, z: &[T]) -> Result<Vec<Vec<T>>> {
        check_dim(self.frame.cols(), z.len(), "complexity frame")?;
        let mut out = Vec::with_capacity(2 * self.subspace_dim() + 1);
        out.push(z.to_vec());
        for i in 0..self.subspace_dim() {
            for sign in [T::one(), -T::one()] {
                let step = sign * self.radius;
                out.push(z.iter().zip(self.frame.row(i)).map(|(&a, &b)| a + step * b).collect());
            }
        }
        Ok(out)
    }
}

/// ψ, ν and δ at one latent, with the configuration used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorTriple<T> {
    pub psi: T,
    pub nu: T,
    pub delta: usize,
    pub z: Vec<T>,
    pub timestep: Option<usize>,
    pub subspace_dim: usize,
    pub radius: T,
}

fn nonzero<T: Scalar>(sigma: &[T], rows: usize, cols: usize) -> Vec<T> {
    let smax = sigma.iter().copied().fold(T::zero(), T::max);
    let cutoff = T::lit(rows.max(cols) as f64 * NONZERO_RTOL) * smax;
    sigma.iter().copied().filter(|&s| s > cutoff && s > T::zero()).collect()
}

/// ψ from a slope matrix.
pub fn scaling_from_slope<T: Scalar>(slope: &Matrix<T>) -> Result<ScalingResult<T>> {
    let sigma = singular_values(slope)?;
    scaling_from_singular_values(&sigma, slope.rows(), slope.cols())
}

pub fn scaling_from_singular_values<T: Scalar>(sigma: &[T], rows: usize, cols: usize) -> Result<ScalingResult<T>> {
    let nz = nonzero(sigma, rows, cols);
    if nz.is_empty() {
        return Err(Error::ZeroMap);
    }
    Ok(ScalingResult {
        psi: nz.iter().map(|s| s.ln()).sum(),
        nonzero_count: nz.len(),
        singular_values: sigma.to_vec(),
    })
}

/// Smooth rank `exp(−Σ αᵢ log αᵢ)` with `αᵢ = σᵢ / Σσⱼ + ε` over non-zero σ.
pub fn rank_from_singular_values<T: Scalar>(sigma: &[T], rows: usize, cols: usize) -> Result<RankResult<T>> {
    let nz = nonzero(sigma, rows, cols);
    if nz.is_empty() {
        return Err(Error::ZeroMap);
    }
    let total: T = nz.iter().copied().sum();
    let eps = T::lit(RANK_EPSILON);
    let alphas: Vec<T> = nz.iter().map(|&s| s / total + eps).collect();
    let entropy: T = alphas.iter().map(|&a| -a * a.ln()).sum();
    Ok(RankResult {
        nu: entropy.exp(),
        alphas,
    })
}

pub fn local_scaling<T: Scalar, M: PiecewiseAffine<T> + ?Sized>(map: &M, z: &[T]) -> Result<ScalingResult<T>> {
    scaling_from_slope(&crate::net::affine_at(map, z)?.slope)
}

pub fn local_rank<T: Scalar, M: PiecewiseAffine<T> + ?Sized>(map: &M, z: &[T]) -> Result<RankResult<T>> {
    let slope = crate::net::affine_at(map, z)?.slope;
    rank_from_singular_values(&singular_values(&slope)?, slope.rows(), slope.cols())
}

/// Number of neurons whose sign is not constant over the probe set.
pub fn knots_crossed(patterns: &[ActivationPattern]) -> usize {
    let Some(first) = patterns.first() else {
        return 0;
    };
    let reference: Vec<bool> = first.flat().collect();
    let mut varies = vec![false; reference.len()];
    for p in &patterns[1..] {
        for ((v, s), &r) in varies.iter_mut().zip(p.flat()).zip(&reference) {
            *v |= s != r;
        }
    }
    varies.into_iter().filter(|&v| v).count()
}

/// Knot-count proxy for the number of regions meeting `V_z`.
pub fn local_complexity<T: Scalar, M: PiecewiseAffine<T> + ?Sized>(
    map: &M,
    z: &[T],
    cfg: &ComplexityConfig<T>,
) -> Result<usize> {
    check_dim(map.input_dim(), z.len(), "latent")?;
    let patterns = cfg
        .probes(z)?
        .iter()
        .map(|p| map.forward(p).map(|(_, pat)| pat))
        .collect::<Result<Vec<_>>>()?;
    Ok(knots_crossed(&patterns))
}

/// All three descriptors from a single Jacobian and one probe sweep.
/// ψ and ν are `NaN` where the local slope is the zero map.
pub fn descriptors_at<T: Scalar, M: PiecewiseAffine<T> + ?Sized>(
    map: &M,
    z: &[T],
    cfg: &ComplexityConfig<T>,
) -> Result<DescriptorTriple<T>> {
    let slope = crate::net::affine_at(map, z)?.slope;
    let sigma = singular_values(&slope)?;
    let (r, c) = slope.shape();
    let psi = match scaling_from_singular_values(&sigma, r, c) {
        Ok(s) => s.psi,
        Err(Error::ZeroMap) => T::nan(),
        Err(e) => return Err(e),
    };
    let nu = match rank_from_singular_values(&sigma, r, c) {
        Ok(s) => s.nu,
        Err(Error::ZeroMap) => T::nan(),
        Err(e) => return Err(e),
    };
    Ok(DescriptorTriple {
        psi,
        nu,
        delta: local_complexity(map, z, cfg)?,
        z: z.to_vec(),
        timestep: None,
        subspace_dim: cfg.subspace_dim(),
        radius: cfg.radius(),
    })
}

/// Entropy gap `H_a − H_b` between two regions, equal to `ψ_a − ψ_b`.
pub fn uncertainty_diff<T: Scalar>(psi_a: T, psi_b: T) -> T {
    psi_a - psi_b
}
