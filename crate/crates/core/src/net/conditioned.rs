use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

use super::{ActivationPattern, CpwlNetwork, LocalAffine, PiecewiseAffine};

/// Network whose input is `[latent ; one_hot(t)]` for timesteps `t ∈ 1..=T`.
///
/// The one-hot block feeds the first layer directly, which is the same as a
/// learned linear timestep embedding folded into that layer's weights; the
/// whole network stays CPWL in the latent.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedNetwork<T> {
    net: CpwlNetwork<T>,
    latent_dim: usize,
    num_timesteps: usize,
}

impl<T: Scalar> ConditionedNetwork<T> {
    pub fn new(net: CpwlNetwork<T>, latent_dim: usize, num_timesteps: usize) -> Result<Self> {
        check_dim(latent_dim + num_timesteps, net.input_dim(), "conditioned input")?;
        Ok(ConditionedNetwork {
            net,
            latent_dim,
            num_timesteps,
        })
    }

    pub fn network(&self) -> &CpwlNetwork<T> {
        &self.net
    }

    pub(crate) fn network_mut(&mut self) -> &mut CpwlNetwork<T> {
        &mut self.net
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn num_timesteps(&self) -> usize {
        self.num_timesteps
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_timesteps {
            Err(Error::InvalidInput(format!(
                "timestep {t} outside 1..={}",
                self.num_timesteps
            )))
        } else {
            Ok(())
        }
    }

    pub fn input(&self, z: &[T], t: usize) -> Result<Vec<T>> {
        check_dim(self.latent_dim, z.len(), "latent")?;
        self.check_timestep(t)?;
        let mut x = Vec::with_capacity(self.net.input_dim());
        x.extend_from_slice(z);
        x.extend((1..=self.num_timesteps).map(|s| if s == t { T::one() } else { T::zero() }));
        Ok(x)
    }

    pub fn forward(&self, z: &[T], t: usize) -> Result<(Vec<T>, ActivationPattern)> {
        self.net.forward(&self.input(z, t)?)
    }

    pub fn eval(&self, z: &[T], t: usize) -> Result<Vec<T>> {
        self.forward(z, t).map(|(y, _)| y)
    }

    /// Affine map in the latent block with the timestep block held at `t`.
    pub fn local_affine(&self, z: &[T], t: usize) -> Result<LocalAffine<T>> {
        self.net.local_affine_partial(&self.input(z, t)?, self.latent_dim)
    }

    pub fn at_timestep(&self, t: usize) -> Result<TimestepView<'_, T>> {
        self.check_timestep(t)?;
        Ok(TimestepView { net: self, t })
    }
}

/// A conditioned network frozen at one timestep: a CPWL map of the latent alone.
#[derive(Debug, Clone, Copy)]
pub struct TimestepView<'a, T> {
    net: &'a ConditionedNetwork<T>,
    t: usize,
}

impl<T: Scalar> TimestepView<'_, T> {
    pub fn timestep(&self) -> usize {
        self.t
    }
}

impl<T: Scalar> PiecewiseAffine<T> for TimestepView<'_, T> {
    fn input_dim(&self) -> usize {
        self.net.latent_dim
    }

    fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn forward(&self, z: &[T]) -> Result<(Vec<T>, ActivationPattern)> {
        self.net.forward(z, self.t)
    }

    fn local_affine(&self, z: &[T]) -> Result<LocalAffine<T>> {
        self.net.local_affine(z, self.t)
    }
}
