use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

use super::{ActivationPattern, AffineMap, LocalAffine, PiecewiseAffine};

/// Default negative-side slope for leaky ReLU when none is given.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation<T> {
    Relu,
    LeakyRelu(T),
    Identity,
}

impl<T: Scalar> Activation<T> {
    pub fn leaky_default() -> Self {
        Activation::LeakyRelu(T::lit(DEFAULT_LEAKY_SLOPE))
    }

    #[inline]
    pub fn is_nonlinear(&self) -> bool {
        !matches!(self, Activation::Identity)
    }

    /// Slope of the activation on the given side. Pre-activations `<= 0` are inactive.
    #[inline]
    pub fn gain(&self, active: bool) -> T {
        match (self, active) {
            (Activation::Identity, _) | (_, true) => T::one(),
            (Activation::Relu, false) => T::zero(),
            (Activation::LeakyRelu(a), false) => *a,
        }
    }

    #[inline]
    pub fn apply(&self, pre: T) -> T {
        pre * self.gain(pre > T::zero())
    }

    pub fn cast<U: Scalar>(&self) -> Activation<U> {
        match *self {
            Activation::Relu => Activation::Relu,
            Activation::Identity => Activation::Identity,
            Activation::LeakyRelu(a) => Activation::LeakyRelu(U::lit(a.as_f64())),
        }
    }
}

/// One affine layer followed by its activation: `x ↦ σ(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>, activation: Activation<T>) -> Result<Self> {
        check_dim(weight.rows(), bias.len(), "layer bias")?;
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("non-finite layer parameters".into()));
        }
        Ok(Layer {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub(crate) fn preactivation(&self, x: &[T]) -> Vec<T> {
        (0..self.out_dim())
            .map(|i| dot(self.weight.row(i), x) + self.bias[i])
            .collect()
    }
}

/// Layered affine + CPWL-activation network `G: ℝ^E → ℝ^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpwlNetwork<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> CpwlNetwork<T> {
    /// Validates that layer shapes chain and the last layer is linear.
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].out_dim(), pair[1].in_dim(), "adjacent layer widths")?;
        }
        if layers.last().expect("non-empty").activation.is_nonlinear() {
            return Err(Error::InvalidInput("final activation must be identity".into()));
        }
        Ok(CpwlNetwork { layers })
    }

    /// `W` and `b` as a single identity-activated layer.
    pub fn linear(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        Self::new(vec![Layer::new(weight, bias, Activation::Identity)?])
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Number of neurons behind a non-linear activation.
    pub fn num_knots(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.activation.is_nonlinear())
            .map(Layer::out_dim)
            .sum()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.rows() * (l.weight.cols() + 1)).sum()
    }

    pub fn forward(&self, z: &[T]) -> Result<(Vec<T>, ActivationPattern)> {
        check_dim(self.input_dim(), z.len(), "network input")?;
        let mut signs = Vec::with_capacity(self.layers.len());
        let mut h = z.to_vec();
        for layer in &self.layers {
            let pre = layer.preactivation(&h);
            if layer.activation.is_nonlinear() {
                signs.push(pre.iter().map(|&p| p > T::zero()).collect());
            } else {
                signs.push(Vec::new());
            }
            h = pre.into_iter().map(|p| layer.activation.apply(p)).collect();
        }
        Ok((h, ActivationPattern::new(signs)))
    }

    pub fn eval(&self, z: &[T]) -> Result<Vec<T>> {
        self.forward(z).map(|(y, _)| y)
    }

    /// Exact local affine map at `z`, differentiating with respect to the first
    /// `wrt` input coordinates only (the remaining inputs are held fixed).
    pub fn local_affine_partial(&self, x: &[T], wrt: usize) -> Result<LocalAffine<T>> {
        check_dim(self.input_dim(), x.len(), "network input")?;
        if wrt > x.len() {
            return Err(Error::InvalidInput("differentiation block exceeds input".into()));
        }
        let mut h = x.to_vec();
        // Jacobian of the current hidden state w.r.t. the first `wrt` inputs.
        let mut jac = Matrix::from_fn(x.len(), wrt, |i, j| if i == j { T::one() } else { T::zero() });
        // Offset carried through the same masked chain, so that it depends on
        // the activation pattern (and the held inputs) but not on `x[..wrt]`.
        let mut off: Vec<T> = x.iter().enumerate().map(|(i, &v)| if i < wrt { T::zero() } else { v }).collect();
        let mut margin = T::infinity();
        let mut signs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = layer.preactivation(&h);
            let mut next_jac = layer.weight.matmul(&jac)?;
            let mut next_off = layer.preactivation(&off);
            if layer.activation.is_nonlinear() {
                let mut s = Vec::with_capacity(pre.len());
                for (i, &p) in pre.iter().enumerate() {
                    margin = margin.min(p.abs());
                    let active = p > T::zero();
                    s.push(active);
                    let g = layer.activation.gain(active);
                    for v in next_jac.row_mut(i) {
                        *v = *v * g;
                    }
                    next_off[i] = next_off[i] * g;
                }
                signs.push(s);
            } else {
                signs.push(Vec::new());
            }
            h = pre.into_iter().map(|p| layer.activation.apply(p)).collect();
            jac = next_jac;
            off = next_off;
        }
        Ok(LocalAffine {
            map: AffineMap { slope: jac, offset: off },
            pattern: ActivationPattern::new(signs),
            output: h,
            margin,
        })
    }

    /// Affine map of the region carrying `pattern`, by the masked product
    /// `W_L D_{L-1} W_{L-1} … D_1 W_1` (and the matching offset).
    pub fn affine_for_pattern(&self, pattern: &ActivationPattern) -> Result<AffineMap<T>> {
        check_dim(self.layers.len(), pattern.layers().len(), "pattern layers")?;
        let e = self.input_dim();
        let mut slope = Matrix::identity(e);
        let mut offset = vec![T::zero(); e];
        for (layer, signs) in self.layers.iter().zip(pattern.layers()) {
            let mut s = layer.weight.matmul(&slope)?;
            let mut o = layer.preactivation(&offset);
            if layer.activation.is_nonlinear() {
                check_dim(layer.out_dim(), signs.len(), "pattern width")?;
                for (i, &active) in signs.iter().enumerate() {
                    let g = layer.activation.gain(active);
                    for v in s.row_mut(i) {
                        *v = *v * g;
                    }
                    o[i] = o[i] * g;
                }
            }
            slope = s;
            offset = o;
        }
        Ok(AffineMap { slope, offset })
    }

    /// Network computing `proj · G(z)`; `proj` must have orthonormal rows.
    pub fn project_outputs(&self, proj: &Matrix<T>) -> Result<Self> {
        check_dim(self.output_dim(), proj.cols(), "projection columns")?;
        if proj.rows() > proj.cols() || proj.row_orthonormality_error() > T::lit(1e-8) {
            return Err(Error::InvalidInput("projection rows are not orthonormal".into()));
        }
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("non-empty");
        let weight = proj.matmul(&last.weight)?;
        let bias = proj.matvec(&last.bias)?;
        *last = Layer::new(weight, bias, Activation::Identity)?;
        Ok(CpwlNetwork { layers })
    }

    pub fn cast<U: Scalar>(&self) -> CpwlNetwork<U> {
        CpwlNetwork {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.cast(),
                    bias: l.bias.iter().map(|&b| U::lit(b.as_f64())).collect(),
                    activation: l.activation.cast(),
                })
                .collect(),
        }
    }
}

impl<T: Scalar> PiecewiseAffine<T> for CpwlNetwork<T> {
    fn input_dim(&self) -> usize {
        CpwlNetwork::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        CpwlNetwork::output_dim(self)
    }

    fn forward(&self, z: &[T]) -> Result<(Vec<T>, ActivationPattern)> {
        CpwlNetwork::forward(self, z)
    }

    fn local_affine(&self, z: &[T]) -> Result<LocalAffine<T>> {
        self.local_affine_partial(z, z.len())
    }
}
