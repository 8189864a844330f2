use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Activation;

use super::train::AdamParams;

/// Additive-noise levels accepted for VAE training data.
pub const ALLOWED_NOISE_STD: [f64; 5] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];

/// Settings shared by every training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Set by the caller; config files carry one global seed instead.
    #[serde(skip)]
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Only `"adam"` is supported.
    pub optimizer: String,
    /// Std of Gaussian noise added to training data (VAE only).
    pub noise_std: f64,
    pub hidden: Vec<usize>,
    /// Hidden activation: `"relu"` or `"leaky_relu"` (negative slope 0.01).
    pub activation: String,
    /// Record a log row every this many steps (0 disables logging).
    pub log_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be positive".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidInput("hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if self.optimizer != "adam" {
            return Err(Error::InvalidInput(format!("unsupported optimizer '{}'", self.optimizer)));
        }
        self.hidden_activation()?;
        if !ALLOWED_NOISE_STD.contains(&self.noise_std) {
            return Err(Error::InvalidInput(format!(
                "noise_std {} not in {:?}",
                self.noise_std, ALLOWED_NOISE_STD
            )));
        }
        Ok(())
    }

    pub fn hidden_activation(&self) -> Result<Activation<f64>> {
        match self.activation.as_str() {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::leaky_default()),
            other => Err(Error::InvalidInput(format!("unsupported activation '{other}'"))),
        }
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.learning_rate,
            ..AdamParams::default()
        }
    }
}

/// One row of a training log. Descriptor means are `NaN` when not measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub psi_mean: f64,
    pub delta_mean: f64,
}

/// CSV with header `step,loss,psi_mean,delta_mean`.
pub fn write_log_csv<W: Write>(rows: &[LogRow], mut w: W) -> Result<()> {
    writeln!(w, "step,loss,psi_mean,delta_mean")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.step, r.loss, r.psi_mean, r.delta_mean)?;
    }
    Ok(())
}
