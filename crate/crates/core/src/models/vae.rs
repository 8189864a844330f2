//! Gaussian VAE with CPWL encoder and decoder, trained on (optionally noised) images.

use serde::{Deserialize, Serialize};

use crate::descriptors::{descriptors_at, ComplexityConfig};
use crate::error::{check_dim, Error, Result};
use crate::linalg::rng;
use crate::net::{mlp, Activation, Checkpoint, CpwlNetwork, MlpSpec};

use super::config::{LogRow, TrainConfig};
use super::data::ImageSet;
use super::train::{backward, check_loss, forward_batch, Adam, Grads};

#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    /// Outputs `[mean ; log-variance]`, each `latent_dim` long.
    pub encoder: CpwlNetwork<f64>,
    /// CPWL end to end; the generator the descriptors are computed on.
    pub decoder: CpwlNetwork<f64>,
    pub latent_dim: usize,
}

impl Vae {
    pub fn init(data_dim: usize, latent_dim: usize, hidden: &[usize], activation: Activation<f64>, seed: u64) -> Result<Self> {
        let spec = |i, o| MlpSpec {
            input_dim: i,
            hidden: hidden.to_vec(),
            output_dim: o,
            activation,
            init: crate::net::Init::Uniform,
        };
        Ok(Vae {
            encoder: mlp(&spec(data_dim, 2 * latent_dim), seed)?,
            decoder: mlp(&spec(latent_dim, data_dim), seed.wrapping_add(1))?,
            latent_dim,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    /// Posterior mean, the latent used for descriptor queries.
    pub fn encode_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.encoder.eval(x)?;
        out.truncate(self.latent_dim);
        Ok(out)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.eval(z)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode_mean(x)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            networks: vec![("encoder".into(), self.encoder.clone()), ("decoder".into(), self.decoder.clone())],
            meta: serde_json::json!({"model": "vae", "latent_dim": self.latent_dim}),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let encoder = ckpt.network("encoder")?.clone();
        let decoder = ckpt.network("decoder")?.clone();
        let latent_dim = decoder.input_dim();
        check_dim(2 * latent_dim, encoder.output_dim(), "encoder output")?;
        Ok(Vae {
            encoder,
            decoder,
            latent_dim,
        })
    }
}

/// How descriptor means are logged during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorProbe {
    /// Number of evaluation images (taken from the start of the eval set).
    pub samples: usize,
    pub subspace_dim: usize,
    pub radius: f64,
    pub frame_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    pub train: TrainConfig,
    pub latent_dim: usize,
    /// Weight of the KL term.
    pub kl_weight: f64,
    pub probe: DescriptorProbe,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            train: TrainConfig {
                seed: 0,
                steps: 4000,
                batch_size: 64,
                learning_rate: 1e-3,
                optimizer: "adam".into(),
                noise_std: 0.0,
                hidden: vec![128; 4],
                activation: "relu".into(),
                log_every: 100,
            },
            latent_dim: 8,
            kl_weight: 1.0,
            probe: DescriptorProbe {
                samples: 200,
                subspace_dim: 4,
                radius: 0.05,
                frame_seed: 7,
            },
        }
    }
}

pub struct VaeRun {
    pub vae: Vae,
    pub log: Vec<LogRow>,
}

/// Mean ψ and mean δ of the decoder at the encoded means of `images`
/// (ψ averaged over points where it is defined).
pub fn descriptor_means(vae: &Vae, images: &[Vec<f64>], cfg: &ComplexityConfig<f64>) -> Result<(f64, f64)> {
    let (mut psi_sum, mut psi_n, mut delta_sum) = (0.0, 0usize, 0.0);
    for x in images {
        let z = vae.encode_mean(x)?;
        let d = descriptors_at(&vae.decoder, &z, cfg)?;
        if d.psi.is_finite() {
            psi_sum += d.psi;
            psi_n += 1;
        }
        delta_sum += d.delta as f64;
    }
    let n = images.len().max(1) as f64;
    Ok((if psi_n > 0 { psi_sum / psi_n as f64 } else { f64::NAN }, delta_sum / n))
}

/// Training images with one fixed draw of `N(0, noise_std²)` pixel noise each.
pub fn noisy_copy(images: &[Vec<f64>], noise_std: f64, seed: u64) -> Vec<Vec<f64>> {
    if noise_std == 0.0 {
        return images.to_vec();
    }
    let mut r = rng::derive(seed, 6);
    images
        .iter()
        .map(|img| img.iter().map(|p| p + noise_std * rng::normal::<f64>(&mut r)).collect())
        .collect()
}

/// Trains by minimizing `‖x − x̂‖² + β·KL` with the reparameterization trick
/// on a fixed noisy copy of `data` (see [`noisy_copy`]).
/// `eval` images feed the descriptor log.
pub fn train_vae(data: &ImageSet, eval: &ImageSet, cfg: &VaeConfig) -> Result<VaeRun> {
    cfg.train.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if data.images.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("images must be normalized to [0, 1]".into()));
    }
    let dim = data.dim();
    let l = cfg.latent_dim;
    let mut vae = Vae::init(dim, l, &cfg.train.hidden, cfg.train.hidden_activation()?, cfg.train.seed)?;
    let mut enc_opt = Adam::new(&vae.encoder, cfg.train.adam());
    let mut dec_opt = Adam::new(&vae.decoder, cfg.train.adam());
    let probe_cfg = if cfg.train.log_every > 0 {
        Some(ComplexityConfig::random(cfg.probe.subspace_dim.min(l), l, cfg.probe.radius, cfg.probe.frame_seed)?)
    } else {
        None
    };
    let probe_set = &eval.images[..cfg.probe.samples.min(eval.len())];

    let train_images = noisy_copy(&data.images, cfg.train.noise_std, cfg.train.seed);
    let mut r = rng::derive(cfg.train.seed, 2);
    let b = cfg.train.batch_size;
    let mut log = Vec::new();
    let mut x = vec![0.0; b * dim];
    let mut eps = vec![0.0; b * l];
    for step in 0..cfg.train.steps {
        for k in 0..b {
            let idx = (rng::uniform::<f64>(&mut r, 0.0, data.len() as f64) as usize).min(data.len() - 1);
            x[k * dim..(k + 1) * dim].copy_from_slice(&train_images[idx]);
        }
        for e in eps.iter_mut() {
            *e = rng::normal(&mut r);
        }
        let loss = vae_step(&mut vae, &mut enc_opt, &mut dec_opt, &x, &eps, b, cfg.kl_weight);
        check_loss(step, loss)?;

        let last = step + 1 == cfg.train.steps;
        if let Some(pc) = &probe_cfg {
            if step % cfg.train.log_every == 0 || last {
                let (psi_mean, delta_mean) = descriptor_means(&vae, probe_set, pc)?;
                log.push(LogRow {
                    step,
                    loss,
                    psi_mean,
                    delta_mean,
                });
            }
        }
    }
    Ok(VaeRun { vae, log })
}

/// One optimizer step on a minibatch; returns the per-sample loss.
fn vae_step(vae: &mut Vae, enc_opt: &mut Adam, dec_opt: &mut Adam, x: &[f64], eps: &[f64], b: usize, beta: f64) -> f64 {
    let l = vae.latent_dim;
    let (enc_out, enc_tape) = forward_batch(&vae.encoder, x, b);
    let mut z = vec![0.0; b * l];
    for k in 0..b {
        for j in 0..l {
            let mu = enc_out[k * 2 * l + j];
            let lv = enc_out[k * 2 * l + l + j].clamp(-20.0, 20.0);
            z[k * l + j] = mu + (0.5 * lv).exp() * eps[k * l + j];
        }
    }
    let (xhat, dec_tape) = forward_batch(&vae.decoder, &z, b);
    let inv_b = 1.0 / b as f64;
    let mut sse = 0.0;
    let grad_xhat: Vec<f64> = xhat
        .iter()
        .zip(x)
        .map(|(a, t)| {
            sse += (a - t).powi(2);
            2.0 * (a - t) * inv_b
        })
        .collect();
    let mut dec_g = Grads::zeros_like(&vae.decoder);
    let grad_z = backward(&vae.decoder, &dec_tape, &grad_xhat, &mut dec_g);

    let mut kl = 0.0;
    let mut grad_enc = vec![0.0; b * 2 * l];
    for k in 0..b {
        for j in 0..l {
            let mu = enc_out[k * 2 * l + j];
            let raw_lv = enc_out[k * 2 * l + l + j];
            let lv = raw_lv.clamp(-20.0, 20.0);
            let var = lv.exp();
            kl += 0.5 * (mu * mu + var - 1.0 - lv);
            let gz = grad_z[k * l + j];
            grad_enc[k * 2 * l + j] = gz + beta * mu * inv_b;
            let dlv = gz * eps[k * l + j] * 0.5 * (0.5 * lv).exp() + beta * 0.5 * (var - 1.0) * inv_b;
            grad_enc[k * 2 * l + l + j] = if raw_lv == lv { dlv } else { 0.0 };
        }
    }
    let mut enc_g = Grads::zeros_like(&vae.encoder);
    backward(&vae.encoder, &enc_tape, &grad_enc, &mut enc_g);
    dec_opt.step(&mut vae.decoder, &dec_g);
    enc_opt.step(&mut vae.encoder, &enc_g);
    (sse + beta * kl) * inv_b
}
