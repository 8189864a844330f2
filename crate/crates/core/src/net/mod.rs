//! Continuous piecewise-linear networks and their exact local affine maps.
//!
//! A CPWL network is affine on each region of a polyhedral partition of its
//! input space. Inside a region the activation pattern is constant, so the
//! Jacobian is the masked product of the layer weights and evaluating it is
//! exact (no numerical differentiation).

mod checkpoint;
mod conditioned;
mod init;
mod network;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use conditioned::{ConditionedNetwork, TimestepView};
pub use init::{mlp, Init, MlpSpec};
pub use network::{Activation, CpwlNetwork, Layer, DEFAULT_LEAKY_SLOPE};

/// Pre-activations with magnitude below this are reported as boundary points.
pub const BOUNDARY_MARGIN: f64 = 1e-12;

/// On/off state of every non-linear neuron, one vector per layer.
/// Identity layers carry no knots and record an empty vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivationPattern {
    layers: Vec<Vec<bool>>,
}

impl ActivationPattern {
    pub fn new(layers: Vec<Vec<bool>>) -> Self {
        ActivationPattern { layers }
    }

    pub fn layers(&self) -> &[Vec<bool>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Vec<bool>> {
        self.layers
    }

    pub fn num_neurons(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Flattened signs across layers, in layer order.
    pub fn flat(&self) -> impl Iterator<Item = bool> + '_ {
        self.layers.iter().flatten().copied()
    }

    /// Concatenates two patterns layer-wise (used for composite maps).
    pub fn concat(mut self, other: ActivationPattern) -> Self {
        self.layers.extend(other.layers);
        self
    }
}

/// `z ↦ slope · z + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T> {
    pub slope: Matrix<T>,
    pub offset: Vec<T>,
}

impl<T: Scalar> AffineMap<T> {
    pub fn apply(&self, z: &[T]) -> Result<Vec<T>> {
        let mut y = self.slope.matvec(z)?;
        for (v, &b) in y.iter_mut().zip(&self.offset) {
            *v = *v + b;
        }
        Ok(y)
    }
}

/// Local affine map at a point plus the activation pattern that selects it.
#[derive(Debug, Clone)]
pub struct LocalAffine<T> {
    pub map: AffineMap<T>,
    pub pattern: ActivationPattern,
    pub output: Vec<T>,
    /// Smallest |pre-activation| over non-linear neurons; infinite for linear maps.
    pub margin: T,
}

/// Any map that is exactly affine on each region of an activation-pattern partition.
pub trait PiecewiseAffine<T: Scalar>: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, z: &[T]) -> Result<(Vec<T>, ActivationPattern)>;
    fn local_affine(&self, z: &[T]) -> Result<LocalAffine<T>>;
}

impl<T: Scalar, M: PiecewiseAffine<T> + ?Sized> PiecewiseAffine<T> for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn forward(&self, z: &[T]) -> Result<(Vec<T>, ActivationPattern)> {
        (**self).forward(z)
    }
    fn local_affine(&self, z: &[T]) -> Result<LocalAffine<T>> {
        (**self).local_affine(z)
    }
}

/// Exact slope and offset of `map` at `z`.
///
/// Points with a pre-activation within [`BOUNDARY_MARGIN`] of zero sit on a knot;
/// a warning is logged and the inactive-side convention is used.
pub fn affine_at<T: Scalar, M: PiecewiseAffine<T> + ?Sized>(map: &M, z: &[T]) -> Result<AffineMap<T>> {
    let local = map.local_affine(z)?;
    if local.margin < T::lit(BOUNDARY_MARGIN) {
        log::warn!(
            "affine_at: point lies on a region boundary (|pre-activation| = {:e})",
            local.margin.as_f64()
        );
    }
    Ok(local.map)
}
