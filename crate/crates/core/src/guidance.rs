//! Steering diffusion sampling toward higher or lower local scaling.
//!
//! A classifier learns to predict the ψ bin of the clean target from a noisy
//! latent `(z_t, t)`. Its probability-weighted bin midpoints form a scalar
//! surrogate whose gradient, exact because the classifier is CPWL, shifts the
//! reverse-step mean.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::stats::mean;
use crate::analysis::{rank_sum, LevelSetBinning};
use crate::descriptors::local_scaling;
use crate::error::{check_dim, Error, Result};
use crate::linalg::rng;
use crate::models::ddpm::{denoise_trajectory, initial_noise, DiffusionModel};
use crate::models::train::{backward, check_loss, cosine_lr, forward_batch, Adam, Grads};
use crate::models::TrainConfig;
use crate::net::{mlp, Checkpoint, ConditionedNetwork, CpwlNetwork, MlpSpec, PiecewiseAffine};
use crate::parallel::map_indexed;

/// Number of uniform ψ bins the reward classifier predicts.
pub const NUM_BINS: usize = 5;

/// Map whose local scaling labels a noisy latent.
#[derive(Debug, Clone, Copy)]
pub enum PsiTarget<'a> {
    /// Decoder evaluated at the clean latent `z₀` (latent-diffusion pipeline).
    Decoder(&'a CpwlNetwork<f64>),
    /// Single-step denoiser map at the sampled `t`, evaluated at `z_t`.
    StepMap,
}

impl PsiTarget<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            PsiTarget::Decoder(_) => "decoder",
            PsiTarget::StepMap => "ddpm_step",
        }
    }

    fn psi(&self, model: &DiffusionModel, z0: &[f64], zt: &[f64], t: usize) -> Result<f64> {
        match self {
            PsiTarget::Decoder(net) => local_scaling(*net, z0).map(|s| s.psi),
            PsiTarget::StepMap => local_scaling(&model.step_map(t)?, zt).map(|s| s.psi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub z_t: Vec<f64>,
    pub t: usize,
    pub psi: f64,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardDataset {
    pub records: Vec<RewardRecord>,
    /// `NUM_BINS + 1` uniform edges over the observed ψ range.
    pub edges: Vec<f64>,
    pub pipeline: String,
    /// Draws dropped because ψ was undefined.
    pub skipped: usize,
}

impl RewardDataset {
    pub fn bin_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.edges.len() - 1];
        for r in &self.records {
            c[r.label] += 1;
        }
        c
    }
}

/// For each datum, `n_timesteps` draws of `t` uniform in `1..=T` and
/// `z_t ~ q(z_t | z₀)`, labelled by the ψ bin of `target`.
pub fn build_reward_dataset(
    model: &DiffusionModel,
    target: PsiTarget<'_>,
    data: &[Vec<f64>],
    n_timesteps: usize,
    seed: u64,
) -> Result<RewardDataset> {
    if n_timesteps == 0 {
        return Err(Error::InvalidInput("n_timesteps must be at least 1".into()));
    }
    let big_t = model.num_timesteps();
    let mut r = rng::seeded(seed);
    let mut raw = Vec::with_capacity(data.len() * n_timesteps);
    let mut skipped = 0;
    for z0 in data {
        check_dim(model.data_dim(), z0.len(), "reward datum")?;
        for _ in 0..n_timesteps {
            let t = (rng::uniform::<f64>(&mut r, 0.0, big_t as f64) as usize).min(big_t - 1) + 1;
            let eps = rng::normal_vec::<f64>(&mut r, z0.len());
            let zt = model.schedule.q_sample(z0, t, &eps);
            match target.psi(model, z0, &zt, t) {
                Ok(psi) => raw.push((zt, t, psi)),
                Err(Error::ZeroMap) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let psis: Vec<f64> = raw.iter().map(|r| r.2).collect();
    let binning = LevelSetBinning::new("psi", &psis, NUM_BINS)?;
    let records = raw
        .into_iter()
        .map(|(z_t, t, psi)| RewardRecord {
            label: binning.bin_of(psi).unwrap_or(0),
            z_t,
            t,
            psi,
        })
        .collect();
    Ok(RewardDataset {
        records,
        edges: binning.edges,
        pipeline: target.tag().into(),
        skipped,
    })
}

/// Classifier `(z_t, t) ↦` bin logits plus the edges that give the bins meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub classifier: ConditionedNetwork<f64>,
    pub edges: Vec<f64>,
}

impl RewardModel {
    pub fn midpoints(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn probabilities(&self, z: &[f64], t: usize) -> Result<Vec<f64>> {
        Ok(softmax(&self.classifier.eval(z, t)?))
    }

    pub fn predict(&self, z: &[f64], t: usize) -> Result<usize> {
        let logits = self.classifier.eval(z, t)?;
        Ok(argmax(&logits))
    }

    /// Expected bin midpoint `Σ_b m_b p_b(z, t)`.
    pub fn surrogate(&self, z: &[f64], t: usize) -> Result<f64> {
        Ok(self.probabilities(z, t)?.iter().zip(self.midpoints()).map(|(p, m)| p * m).sum())
    }

    /// Exact gradient of the surrogate in `z`: with local logits `A z + c`,
    /// `∇ = Aᵀ (p ⊙ (m − Σ p m))`.
    pub fn surrogate_gradient(&self, z: &[f64], t: usize) -> Result<Vec<f64>> {
        let local = self.classifier.local_affine(z, t)?;
        let p = softmax(&local.output);
        let m = self.midpoints();
        let s: f64 = p.iter().zip(&m).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = p.iter().zip(&m).map(|(pi, mi)| pi * (mi - s)).collect();
        local.map.slope.t_matvec(&w)
    }

    /// Gradient of `log p_bin`: `Aᵀ (e_bin − p)`.
    pub fn log_prob_gradient(&self, z: &[f64], t: usize, bin: usize) -> Result<Vec<f64>> {
        let local = self.classifier.local_affine(z, t)?;
        let mut w: Vec<f64> = softmax(&local.output).iter().map(|p| -p).collect();
        *w.get_mut(bin).ok_or_else(|| Error::InvalidInput(format!("bin {bin} out of range")))? += 1.0;
        local.map.slope.t_matvec(&w)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            networks: vec![("classifier".into(), self.classifier.network().clone())],
            meta: serde_json::json!({
                "model": "reward",
                "latent_dim": self.classifier.latent_dim(),
                "num_timesteps": self.classifier.num_timesteps(),
                "edges": self.edges,
            }),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let net = ckpt.network("classifier")?.clone();
        let field = |k: &str| {
            ckpt.meta[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format(format!("reward checkpoint lacks {k}")))
        };
        let edges: Vec<f64> = serde_json::from_value(ckpt.meta["edges"].clone())
            .map_err(|_| Error::Format("reward checkpoint lacks edges".into()))?;
        Ok(RewardModel {
            classifier: ConditionedNetwork::new(net, field("latent_dim")?, field("num_timesteps")?)?,
            edges,
        })
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub train: TrainConfig,
    /// Fraction of records held out for the accuracy report.
    pub holdout_fraction: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            train: TrainConfig {
                seed: 0,
                steps: 4000,
                batch_size: 128,
                learning_rate: 1e-3,
                optimizer: "adam".into(),
                noise_std: 0.0,
                hidden: vec![64, 64],
                activation: "relu".into(),
                log_every: 0,
            },
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub train_size: usize,
    pub heldout_size: usize,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    /// Held-out accuracy of always predicting the most frequent training bin.
    pub majority_baseline: f64,
    pub bin_counts: Vec<usize>,
}

pub struct RewardRun {
    pub model: RewardModel,
    pub report: RewardReport,
}

/// Cross-entropy training on a seeded train/held-out split.
pub fn train_reward(ds: &RewardDataset, num_timesteps: usize, cfg: &RewardConfig) -> Result<RewardRun> {
    cfg.train.validate()?;
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::InvalidInput("holdout_fraction must lie in [0, 1)".into()));
    }
    let counts = ds.bin_counts();
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidInput("reward training needs at least two occupied bins".into()));
    }
    let dim = ds.records[0].z_t.len();
    let k = ds.edges.len() - 1;
    let mut order: Vec<usize> = (0..ds.records.len()).collect();
    order.shuffle(&mut rng::derive(cfg.train.seed, 4));
    let n_hold = (ds.records.len() as f64 * cfg.holdout_fraction).round() as usize;
    let (hold, train) = order.split_at(n_hold);
    if train.is_empty() {
        return Err(Error::InvalidInput("no training records after the hold-out split".into()));
    }

    let net = mlp(
        &MlpSpec {
            input_dim: dim + num_timesteps,
            hidden: cfg.train.hidden.clone(),
            output_dim: k,
            activation: cfg.train.hidden_activation()?,
            init: crate::net::Init::Uniform,
        },
        cfg.train.seed,
    )?;
    let mut classifier = ConditionedNetwork::new(net, dim, num_timesteps)?;
    let mut opt = Adam::new(classifier.network(), cfg.train.adam());
    let mut r = rng::derive(cfg.train.seed, 5);
    let b = cfg.train.batch_size;
    let width = dim + num_timesteps;
    let mut x = vec![0.0; b * width];
    let mut labels = vec![0; b];
    for step in 0..cfg.train.steps {
        for (j, row) in x.chunks_mut(width).enumerate() {
            let pick = (rng::uniform::<f64>(&mut r, 0.0, train.len() as f64) as usize).min(train.len() - 1);
            let rec = &ds.records[train[pick]];
            row.copy_from_slice(&classifier.input(&rec.z_t, rec.t)?);
            labels[j] = rec.label;
        }
        let (logits, tape) = forward_batch(classifier.network(), &x, b);
        let mut loss = 0.0;
        let mut grad = vec![0.0; b * k];
        for j in 0..b {
            let p = softmax(&logits[j * k..(j + 1) * k]);
            loss -= p[labels[j]].max(1e-300).ln();
            for c in 0..k {
                let onehot = if c == labels[j] { 1.0 } else { 0.0 };
                grad[j * k + c] = (p[c] - onehot) / b as f64;
            }
        }
        check_loss(step, loss / b as f64)?;
        let mut g = Grads::zeros_like(classifier.network());
        backward(classifier.network(), &tape, &grad, &mut g);
        let lr = cosine_lr(cfg.train.learning_rate, step, cfg.train.steps, 0.01);
        opt.step_with_lr(classifier.network_mut(), &g, lr);
    }

    let model = RewardModel {
        classifier,
        edges: ds.edges.clone(),
    };
    let accuracy = |idx: &[usize]| -> Result<f64> {
        if idx.is_empty() {
            return Ok(f64::NAN);
        }
        let mut hits = 0;
        for &i in idx {
            let rec = &ds.records[i];
            hits += usize::from(model.predict(&rec.z_t, rec.t)? == rec.label);
        }
        Ok(hits as f64 / idx.len() as f64)
    };
    let mut train_counts = vec![0; k];
    for &i in train {
        train_counts[ds.records[i].label] += 1;
    }
    let majority = argmax(&train_counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let baseline = if hold.is_empty() {
        f64::NAN
    } else {
        hold.iter().filter(|&&i| ds.records[i].label == majority).count() as f64 / hold.len() as f64
    };
    let report = RewardReport {
        train_size: train.len(),
        heldout_size: hold.len(),
        train_accuracy: accuracy(train)?,
        heldout_accuracy: accuracy(hold)?,
        majority_baseline: baseline,
        bin_counts: counts,
    };
    Ok(RewardRun { model, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceTarget {
    MaximizePsi,
    MinimizePsi,
    /// Raise the log-probability of one ψ bin.
    Bin(usize),
}

/// How the gradient is scaled before it is added to the reverse mean at step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftScale {
    /// `ρ·∇`.
    Unit,
    /// `ρ·σ_t·∇`: the shift is measured in units of the step noise.
    #[default]
    Std,
    /// `ρ·σ_t²·∇`, the classifier-guidance form.
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Step size; negative values reverse the direction of the target.
    pub rho: f64,
    pub target: GuidanceTarget,
    /// Timesteps at which the shift is applied; `None` applies it at every step.
    #[serde(default)]
    pub timesteps: Option<Vec<usize>>,
    #[serde(default)]
    pub scale: ShiftScale,
}

impl GuidanceConfig {
    pub fn new(rho: f64) -> Self {
        GuidanceConfig {
            rho,
            target: GuidanceTarget::MaximizePsi,
            timesteps: None,
            scale: ShiftScale::default(),
        }
    }

    /// Multiplier of the gradient at step `t`.
    pub fn step_factor(&self, model: &DiffusionModel, t: usize) -> f64 {
        match self.scale {
            ShiftScale::Unit => self.rho,
            ShiftScale::Std => self.rho * model.schedule.beta(t).sqrt(),
            ShiftScale::Variance => self.rho * model.schedule.beta(t),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() {
            return Err(Error::InvalidInput("rho must be finite".into()));
        }
        Ok(())
    }

    fn applies_at(&self, t: usize) -> bool {
        self.timesteps.as_ref().is_none_or(|ts| ts.contains(&t))
    }
}

fn scaled_shift(factor: f64, t: usize, grad: Vec<f64>) -> Result<Option<Vec<f64>>> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(t));
    }
    Ok(Some(grad.into_iter().map(|g| factor * g).collect()))
}

/// Reverse chain from seed-derived noise with the mean shifted along the
/// gradient of the reward surrogate, scaled per `GuidanceConfig::scale`. `ρ = 0` runs the unguided chain.
pub fn guided_sample(
    model: &DiffusionModel,
    reward: &RewardModel,
    cfg: &GuidanceConfig,
    seed: u64,
) -> Result<Vec<(usize, Vec<f64>)>> {
    cfg.validate()?;
    check_dim(model.data_dim(), reward.classifier.latent_dim(), "reward latent")?;
    check_dim(model.num_timesteps(), reward.classifier.num_timesteps(), "reward timesteps")?;
    let z_t = initial_noise(model.data_dim(), seed);
    if cfg.rho == 0.0 {
        return denoise_trajectory(model, &z_t, seed, None);
    }
    let shift = |t: usize, z: &[f64]| -> Result<Option<Vec<f64>>> {
        if !cfg.applies_at(t) {
            return Ok(None);
        }
        let grad = match cfg.target {
            GuidanceTarget::MaximizePsi => reward.surrogate_gradient(z, t)?,
            GuidanceTarget::MinimizePsi => reward.surrogate_gradient(z, t)?.into_iter().map(|g| -g).collect(),
            GuidanceTarget::Bin(b) => reward.log_prob_gradient(z, t, b)?,
        };
        scaled_shift(cfg.step_factor(model, t), t, grad)
    };
    denoise_trajectory(model, &z_t, seed, Some(&shift))
}

/// Default finite-difference step of the oracle gradient.
pub const ORACLE_STEP: f64 = 0.1;

/// Central differences `(ψ(z + h eᵢ) − ψ(z − h eᵢ)) / 2h` of a true descriptor.
pub fn oracle_gradient<F>(oracle: &F, z: &[f64], t: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], usize) -> Result<f64>,
{
    let mut g = Vec::with_capacity(z.len());
    let mut p = z.to_vec();
    for i in 0..z.len() {
        p[i] = z[i] + h;
        let up = oracle(&p, t)?;
        p[i] = z[i] - h;
        let down = oracle(&p, t)?;
        p[i] = z[i];
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// Guidance by finite differences of the true ψ instead of the reward model.
/// Feasible only for small latents.
pub fn oracle_guided_sample<F>(
    model: &DiffusionModel,
    oracle: &F,
    cfg: &GuidanceConfig,
    seed: u64,
    h: f64,
) -> Result<Vec<(usize, Vec<f64>)>>
where
    F: Fn(&[f64], usize) -> Result<f64>,
{
    cfg.validate()?;
    if model.data_dim() > 16 {
        return Err(Error::InvalidInput("oracle guidance is limited to latents of dimension ≤ 16".into()));
    }
    if let GuidanceTarget::Bin(_) = cfg.target {
        return Err(Error::InvalidInput("oracle guidance supports maximize/minimize targets only".into()));
    }
    let z_t = initial_noise(model.data_dim(), seed);
    if cfg.rho == 0.0 {
        return denoise_trajectory(model, &z_t, seed, None);
    }
    let sign = if cfg.target == GuidanceTarget::MinimizePsi { -1.0 } else { 1.0 };
    let shift = |t: usize, z: &[f64]| -> Result<Option<Vec<f64>>> {
        if !cfg.applies_at(t) {
            return Ok(None);
        }
        scaled_shift(sign * cfg.step_factor(model, t), t, oracle_gradient(oracle, z, t, h)?)
    };
    denoise_trajectory(model, &z_t, seed, Some(&shift))
}

/// Per-ρ outcome of a guidance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoOutcome {
    pub rho: f64,
    pub final_psi: Vec<f64>,
    pub mean_final_psi: f64,
    /// Samples whose final ψ was undefined.
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacentTest {
    pub rho_low: f64,
    pub rho_high: f64,
    /// One-sided rank-sum p-value for "higher ρ gives higher final ψ".
    pub p_greater: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceManifest {
    pub schema_version: u32,
    pub pipeline: String,
    pub seeds: Vec<u64>,
    pub rhos: Vec<f64>,
    pub outcomes: Vec<RhoOutcome>,
    pub adjacent: Vec<AdjacentTest>,
}

impl GuidanceManifest {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Runs `guided_sample` for every `(ρ, seed)` and scores each final latent with `final_psi`.
#[allow(clippy::too_many_arguments)]
pub fn guidance_sweep<F>(
    model: &DiffusionModel,
    reward: &RewardModel,
    pipeline: &str,
    rhos: &[f64],
    seeds: &[u64],
    template: &GuidanceConfig,
    final_psi: F,
    workers: usize,
) -> Result<GuidanceManifest>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    let mut outcomes = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let cfg = GuidanceConfig {
            rho,
            ..template.clone()
        };
        let psis = map_indexed(workers, seeds.len(), |i| {
            let traj = guided_sample(model, reward, &cfg, seeds[i])?;
            let z0 = &traj.last().expect("trajectory is never empty").1;
            match final_psi(z0) {
                Ok(v) => Ok(Some(v)),
                Err(Error::ZeroMap) => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        let undefined = psis.iter().filter(|p| p.is_none()).count();
        let final_psi: Vec<f64> = psis.into_iter().flatten().collect();
        outcomes.push(RhoOutcome {
            rho,
            mean_final_psi: mean(&final_psi),
            final_psi,
            undefined,
        });
    }
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[a].rho.total_cmp(&outcomes[b].rho));
    let adjacent = order
        .windows(2)
        .map(|w| {
            let (lo, hi) = (&outcomes[w[0]], &outcomes[w[1]]);
            Ok(AdjacentTest {
                rho_low: lo.rho,
                rho_high: hi.rho,
                p_greater: rank_sum(&lo.final_psi, &hi.final_psi)?.p_greater,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GuidanceManifest {
        schema_version: 1,
        pipeline: pipeline.into(),
        seeds: seeds.to_vec(),
        rhos: rhos.to_vec(),
        outcomes,
        adjacent,
    })
}

/// `G(s·u)`: the decoder re-expressed in coordinates scaled by `1/s`, so a
/// diffusion model can work on unit-scale latents.
pub fn rescale_decoder_input(decoder: &CpwlNetwork<f64>, s: f64) -> Result<CpwlNetwork<f64>> {
    let mut out = decoder.clone();
    let first = out
        .layers_mut()
        .first_mut()
        .ok_or_else(|| Error::InvalidInput("decoder has no layers".into()))?;
    for w in first.weight.as_mut_slice() {
        *w *= s;
    }
    Ok(out)
}

/// Decoder ψ as a plain function of the latent.
pub fn decoder_psi<M: PiecewiseAffine<f64>>(decoder: &M) -> impl Fn(&[f64]) -> Result<f64> + Sync + Send + '_ {
    move |z| local_scaling(decoder, z).map(|s| s.psi)
}

/// ψ of the single-step map at timestep `t`, as a function of the latent.
pub fn step_psi(model: &DiffusionModel, t: usize) -> Result<impl Fn(&[f64]) -> Result<f64> + Sync + Send + '_> {
    let map = model.step_map(t)?;
    Ok(move |z: &[f64]| local_scaling(&map, z).map(|s| s.psi))
}
