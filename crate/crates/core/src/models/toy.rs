//! Regression generator `ℝ² → ℝ³` onto a surface made of five Gaussian bumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::rng;
use crate::net::{mlp, CpwlNetwork, MlpSpec};

use super::config::{LogRow, TrainConfig};
use super::train::{backward, check_loss, cosine_lr, forward_batch, Adam, Grads};

/// Target manifold `z ↦ (z₁·s, z₂·s, Σ aₖ exp(−‖z − cₖ‖² / 2wₖ²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySurface {
    pub centers: Vec<[f64; 2]>,
    pub amplitudes: Vec<f64>,
    pub widths: Vec<f64>,
    /// Scale applied to the two planar output coordinates.
    pub planar_scale: f64,
}

impl Default for ToySurface {
    fn default() -> Self {
        ToySurface {
            centers: vec![[-5.0, -5.0], [5.0, -4.0], [-4.0, 5.0], [4.5, 5.0], [0.0, 0.0]],
            amplitudes: vec![1.0, 0.8, 1.2, 0.9, 1.5],
            widths: vec![2.0, 2.5, 1.8, 2.2, 2.5],
            planar_scale: 0.2,
        }
    }
}

impl ToySurface {
    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if n == 0 || self.amplitudes.len() != n || self.widths.len() != n {
            return Err(Error::InvalidInput("surface needs matching centers/amplitudes/widths".into()));
        }
        if self.widths.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidInput("bump widths must be positive".into()));
        }
        Ok(())
    }

    pub fn height(&self, z: [f64; 2]) -> f64 {
        self.centers
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.widths)
            .map(|((c, a), w)| {
                let d2 = (z[0] - c[0]).powi(2) + (z[1] - c[1]).powi(2);
                a * (-d2 / (2.0 * w * w)).exp()
            })
            .sum()
    }

    pub fn target(&self, z: [f64; 2]) -> [f64; 3] {
        [z[0] * self.planar_scale, z[1] * self.planar_scale, self.height(z)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub train: TrainConfig,
    pub surface: ToySurface,
    /// Half-width of the square latent domain.
    pub domain: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            train: TrainConfig {
                seed: 0,
                steps: 30_000,
                batch_size: 256,
                learning_rate: 3e-3,
                optimizer: "adam".into(),
                noise_std: 0.0,
                hidden: vec![20, 20, 20],
                activation: "relu".into(),
                log_every: 500,
            },
            surface: ToySurface::default(),
            domain: 10.0,
        }
    }
}

pub struct ToyRun {
    pub net: CpwlNetwork<f64>,
    pub log: Vec<LogRow>,
}

/// Mean squared error per output coordinate on a regular `n × n` grid of the domain.
pub fn heldout_mse(net: &CpwlNetwork<f64>, surface: &ToySurface, domain: f64, n: usize) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let z = [
                -domain + 2.0 * domain * (i as f64 + 0.5) / n as f64,
                -domain + 2.0 * domain * (j as f64 + 0.5) / n as f64,
            ];
            let y = net.eval(&z)?;
            let t = surface.target(z);
            total += y.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 3.0;
        }
    }
    Ok(total / (n * n) as f64)
}

/// He-initialized MLP whose first layer is scaled by `1/domain`, so initial
/// knots spread over the whole latent box rather than crowding the origin.
pub fn initial_toy_network(cfg: &ToyConfig) -> Result<CpwlNetwork<f64>> {
    let mut net = mlp(
        &MlpSpec {
            input_dim: 2,
            hidden: cfg.train.hidden.clone(),
            output_dim: 3,
            activation: cfg.train.hidden_activation()?,
            init: crate::net::Init::He { bias_std: 0.5 },
        },
        cfg.train.seed,
    )?;
    let first = &mut net.layers_mut()[0];
    for w in first.weight.as_mut_slice() {
        *w /= cfg.domain;
    }
    Ok(net)
}

/// Fits the generator to the surface with uniformly drawn latents.
pub fn train_toy_generator(cfg: &ToyConfig) -> Result<ToyRun> {
    cfg.train.validate()?;
    cfg.surface.validate()?;
    let mut net = initial_toy_network(cfg)?;
    let mut opt = Adam::new(&net, cfg.train.adam());
    let mut r = rng::derive(cfg.train.seed, 1);
    let b = cfg.train.batch_size;
    let mut log = Vec::new();
    let mut x = vec![0.0; 2 * b];
    let mut target = vec![0.0; 3 * b];
    for step in 0..cfg.train.steps {
        for k in 0..b {
            let z = [rng::uniform(&mut r, -cfg.domain, cfg.domain), rng::uniform(&mut r, -cfg.domain, cfg.domain)];
            x[2 * k..2 * k + 2].copy_from_slice(&z);
            target[3 * k..3 * k + 3].copy_from_slice(&cfg.surface.target(z));
        }
        let (y, tape) = forward_batch(&net, &x, b);
        let scale = 2.0 / (3 * b) as f64;
        let mut loss = 0.0;
        let grad: Vec<f64> = y
            .iter()
            .zip(&target)
            .map(|(a, t)| {
                loss += (a - t).powi(2);
                scale * (a - t)
            })
            .collect();
        let loss = loss / (3 * b) as f64;
        check_loss(step, loss)?;
        let mut g = Grads::zeros_like(&net);
        backward(&net, &tape, &grad, &mut g);
        opt.step_with_lr(&mut net, &g, cosine_lr(cfg.train.learning_rate, step, cfg.train.steps, 0.01));
        if cfg.train.log_every > 0 && step % cfg.train.log_every == 0 {
            log.push(LogRow {
                step,
                loss,
                psi_mean: f64::NAN,
                delta_mean: f64::NAN,
            });
        }
    }
    Ok(ToyRun { net, log })
}
