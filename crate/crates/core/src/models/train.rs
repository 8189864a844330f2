//! Minibatch backpropagation through CPWL networks and the Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::net::CpwlNetwork;

/// Activations cached by [`forward_batch`] for the backward pass.
pub struct Tape {
    batch: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Row-major `batch × input_dim` in, `batch × output_dim` out.
pub fn forward_batch(net: &CpwlNetwork<f64>, x: &[f64], batch: usize) -> (Vec<f64>, Tape) {
    debug_assert_eq!(x.len(), batch * net.input_dim());
    let mut inputs = Vec::with_capacity(net.layers().len());
    let mut pre_all = Vec::with_capacity(net.layers().len());
    let mut h = x.to_vec();
    for layer in net.layers() {
        let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
        let w = layer.weight.as_slice();
        let mut pre = vec![0.0; batch * n_out];
        for b in 0..batch {
            let xb = &h[b * n_in..(b + 1) * n_in];
            let out = &mut pre[b * n_out..(b + 1) * n_out];
            for (o, v) in out.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *v = dot(row, xb) + layer.bias[o];
            }
        }
        let post: Vec<f64> = pre.iter().map(|&p| layer.activation.apply(p)).collect();
        inputs.push(std::mem::replace(&mut h, post));
        pre_all.push(pre);
    }
    (
        h,
        Tape {
            batch,
            inputs,
            pre: pre_all,
        },
    )
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &CpwlNetwork<f64>) -> Self {
        Grads {
            weights: net.layers().iter().map(|l| vec![0.0; l.weight.as_slice().len()]).collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Accumulates parameter gradients into `grads` and returns `∂loss/∂input`.
pub fn backward(net: &CpwlNetwork<f64>, tape: &Tape, grad_out: &[f64], grads: &mut Grads) -> Vec<f64> {
    let batch = tape.batch;
    let mut g = grad_out.to_vec();
    for (li, layer) in net.layers().iter().enumerate().rev() {
        let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
        let pre = &tape.pre[li];
        let x = &tape.inputs[li];
        if layer.activation.is_nonlinear() {
            for (gv, &p) in g.iter_mut().zip(pre) {
                *gv *= layer.activation.gain(p > 0.0);
            }
        }
        let w = layer.weight.as_slice();
        let gw = &mut grads.weights[li];
        let gb = &mut grads.biases[li];
        let mut gx = vec![0.0; batch * n_in];
        for b in 0..batch {
            let gb_row = &g[b * n_out..(b + 1) * n_out];
            let xb = &x[b * n_in..(b + 1) * n_in];
            let gxb = &mut gx[b * n_in..(b + 1) * n_in];
            for (o, &go) in gb_row.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                gb[o] += go;
                let wrow = &w[o * n_in..(o + 1) * n_in];
                let gwrow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    gwrow[i] += go * xb[i];
                    gxb[i] += go * wrow[i];
                }
            }
        }
        g = gx;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    m: Grads,
    v: Grads,
    t: i32,
}

impl Adam {
    pub fn new(net: &CpwlNetwork<f64>, params: AdamParams) -> Self {
        Adam {
            params,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
            t: 0,
        }
    }

    /// One update with learning rate `lr` (overrides the configured rate, for schedules).
    pub fn step_with_lr(&mut self, net: &mut CpwlNetwork<f64>, grads: &Grads, lr: f64) {
        self.t += 1;
        let AdamParams { beta1, beta2, eps, .. } = self.params;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            };
            update(
                layer.weight.as_mut_slice(),
                &grads.weights[li],
                &mut self.m.weights[li],
                &mut self.v.weights[li],
            );
            update(&mut layer.bias, &grads.biases[li], &mut self.m.biases[li], &mut self.v.biases[li]);
        }
    }

    pub fn step(&mut self, net: &mut CpwlNetwork<f64>, grads: &Grads) {
        self.step_with_lr(net, grads, self.params.lr)
    }
}

pub(crate) fn check_loss(step: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { step, loss })
    }
}

/// Cosine decay from `lr` to `lr * floor` over `steps`.
pub fn cosine_lr(lr: f64, step: usize, steps: usize, floor: f64) -> f64 {
    if steps <= 1 {
        return lr;
    }
    let p = step as f64 / (steps - 1) as f64;
    lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{mlp, Activation, MlpSpec};

    fn net() -> CpwlNetwork<f64> {
        mlp(
            &MlpSpec {
                input_dim: 3,
                hidden: vec![6, 5],
                output_dim: 2,
                activation: Activation::LeakyRelu(0.1),
                init: crate::net::Init::He { bias_std: 0.2 },
            },
            9,
        )
        .unwrap()
    }

    /// Loss `½‖f(x)‖²` summed over the batch; compare the backward pass with
    /// central differences on every parameter.
    #[test]
    fn backward_matches_finite_differences() {
        let mut n = net();
        let x = vec![0.3, -0.7, 1.1, -0.2, 0.5, 0.9];
        let loss = |n: &CpwlNetwork<f64>| {
            let (y, _) = forward_batch(n, &x, 2);
            0.5 * y.iter().map(|v| v * v).sum::<f64>()
        };
        let (y, tape) = forward_batch(&n, &x, 2);
        let mut g = Grads::zeros_like(&n);
        let gx = backward(&n, &tape, &y, &mut g);
        let h = 1e-6;
        for li in 0..n.layers().len() {
            for k in 0..n.layers()[li].weight.as_slice().len() {
                let orig = n.layers()[li].weight.as_slice()[k];
                n.layers_mut()[li].weight.as_mut_slice()[k] = orig + h;
                let lp = loss(&n);
                n.layers_mut()[li].weight.as_mut_slice()[k] = orig - h;
                let lm = loss(&n);
                n.layers_mut()[li].weight.as_mut_slice()[k] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g.weights[li][k]).abs() < 1e-6, "layer {li} weight {k}");
            }
        }
        let mut xp = x.clone();
        xp[4] += h;
        let (yp, _) = forward_batch(&n, &xp, 2);
        xp[4] -= 2.0 * h;
        let (ym, _) = forward_batch(&n, &xp, 2);
        let fd = (0.5 * yp.iter().map(|v| v * v).sum::<f64>() - 0.5 * ym.iter().map(|v| v * v).sum::<f64>()) / (2.0 * h);
        assert!((fd - gx[4]).abs() < 1e-6);
    }

    #[test]
    fn batch_forward_matches_pointwise() {
        let n = net();
        let x = vec![0.3, -0.7, 1.1, -0.2, 0.5, 0.9];
        let (y, _) = forward_batch(&n, &x, 2);
        assert_eq!(&y[..2], n.eval(&x[..3]).unwrap().as_slice());
        assert_eq!(&y[2..], n.eval(&x[3..]).unwrap().as_slice());
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        let mut n = net();
        let mut opt = Adam::new(&n, AdamParams::default());
        let x = vec![0.3, -0.7, 1.1];
        let first = forward_batch(&n, &x, 1).0.iter().map(|v| v * v).sum::<f64>();
        for _ in 0..300 {
            let (y, tape) = forward_batch(&n, &x, 1);
            let mut g = Grads::zeros_like(&n);
            backward(&n, &tape, &y, &mut g);
            opt.step(&mut n, &g);
        }
        let last = forward_batch(&n, &x, 1).0.iter().map(|v| v * v).sum::<f64>();
        assert!(last < 0.01 * first);
    }
}
