use crate::error::Result;
use crate::linalg::{rng, Matrix};
use crate::scalar::Scalar;

use super::{Activation, CpwlNetwork, Layer};

/// Shape of a multilayer perceptron: hidden widths share one activation,
/// the output layer is linear.
#[derive(Debug, Clone)]
pub struct MlpSpec<T> {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation<T>,
    pub init: Init<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init<T> {
    /// `N(0, 2/fan_in)` weights, `N(0, bias_std²)` biases.
    He { bias_std: T },
    /// Weights and biases `U(−1/√fan_in, 1/√fan_in)` (the PyTorch `Linear` default).
    Uniform,
}

pub fn mlp<T: Scalar>(spec: &MlpSpec<T>, seed: u64) -> Result<CpwlNetwork<T>> {
    let mut r = rng::seeded(seed);
    let mut dims = vec![spec.input_dim];
    dims.extend(&spec.hidden);
    dims.push(spec.output_dim);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (k, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let (data, bias): (Vec<T>, Vec<T>) = match spec.init {
            Init::He { bias_std } => {
                let std = T::lit((2.0 / fan_in as f64).sqrt());
                let w = (0..fan_in * fan_out).map(|_| rng::normal::<T>(&mut r) * std).collect();
                let b = (0..fan_out).map(|_| rng::normal::<T>(&mut r) * bias_std).collect();
                (w, b)
            }
            Init::Uniform => {
                let k = T::lit(1.0 / (fan_in as f64).sqrt());
                let w = (0..fan_in * fan_out).map(|_| rng::uniform(&mut r, -k, k)).collect();
                let b = (0..fan_out).map(|_| rng::uniform(&mut r, -k, k)).collect();
                (w, b)
            }
        };
        let act = if k + 2 == dims.len() {
            Activation::Identity
        } else {
            spec.activation
        };
        layers.push(Layer::new(
            Matrix::from_vec(fan_out, fan_in, data)?,
            bias,
            act,
        )?);
    }
    CpwlNetwork::new(layers)
}
