//! `train-reward`, `guide`.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use cpwl_geometry::analysis::stats::mean;
use cpwl_geometry::descriptors::local_scaling;
use cpwl_geometry::guidance::{
    build_reward_dataset, guidance_sweep, guided_sample, oracle_guided_sample, train_reward, GuidanceConfig,
    GuidanceTarget, ShiftScale, PsiTarget, RewardConfig, RewardModel, ORACLE_STEP,
};
use cpwl_geometry::models::data::Toy2d;
use cpwl_geometry::models::ddpm::DiffusionModel;
use cpwl_geometry::net::CpwlNetwork;
use cpwl_geometry::parallel::map_indexed;
use cpwl_geometry::{Error, Result};

use super::{global_keys, Command};
use crate::run::{check_key, sample_seed, CliError, CliResult, Run};
use crate::specs::{LoadedMap, MapRef};

/// Which map supplies the ψ labels and the final score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pipeline {
    /// ψ of a CPWL decoder at the clean latent.
    Decoder { decoder: MapRef },
    /// ψ of the single reverse step at the noisy latent; samples are scored
    /// with the step map at `final_timestep`.
    DdpmStep {
        #[serde(default = "one")]
        final_timestep: usize,
    },
}

fn one() -> usize {
    1
}

enum LoadedPipeline {
    Decoder(CpwlNetwork<f64>),
    DdpmStep(usize),
}

impl LoadedPipeline {
    fn load(run: &mut Run, p: &Pipeline) -> CliResult<Self> {
        match p {
            Pipeline::Decoder { decoder } => match LoadedMap::load(run, decoder, "pipeline.decoder")? {
                LoadedMap::Net(n) => Ok(LoadedPipeline::Decoder(n)),
                LoadedMap::Step(..) => Err(CliError::Config("pipeline.decoder must be a plain network".into())),
            },
            Pipeline::DdpmStep { final_timestep } => Ok(LoadedPipeline::DdpmStep(*final_timestep)),
        }
    }

    fn target(&self) -> PsiTarget<'_> {
        match self {
            LoadedPipeline::Decoder(n) => PsiTarget::Decoder(n),
            LoadedPipeline::DdpmStep(_) => PsiTarget::StepMap,
        }
    }

    /// ψ used to score a final sample.
    fn final_psi(&self, model: &DiffusionModel, z: &[f64]) -> Result<f64> {
        match self {
            LoadedPipeline::Decoder(n) => local_scaling(n, z).map(|s| s.psi),
            LoadedPipeline::DdpmStep(t) => local_scaling(&model.step_map(*t)?, z).map(|s| s.psi),
        }
    }

    /// True ψ at a noisy latent, differentiated by the oracle.
    fn oracle_psi(&self, model: &DiffusionModel, z: &[f64], t: usize) -> Result<f64> {
        match self {
            LoadedPipeline::Decoder(n) => local_scaling(n, z).map(|s| s.psi),
            LoadedPipeline::DdpmStep(_) => local_scaling(&model.step_map(t)?, z).map(|s| s.psi),
        }
    }
}

/// Clean 2-D latents the reward dataset is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentData {
    pub dataset: Toy2d,
    pub count: usize,
    #[serde(default)]
    pub data_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainReward {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// DDPM checkpoint written by `train-ddpm`.
    pub checkpoint: PathBuf,
    pub pipeline: Pipeline,
    pub data: LatentData,
    /// Noisy draws per clean latent.
    #[serde(default = "ten")]
    pub n_timesteps: usize,
    pub reward: RewardConfig,
}

fn ten() -> usize {
    10
}

global_keys!(TrainReward);

impl Command for TrainReward {
    const NAME: &'static str = "train-reward";

    fn validate(&self) -> CliResult<()> {
        check_key("reward.train", self.reward.train.validate())?;
        if !(self.reward.holdout_fraction > 0.0 && self.reward.holdout_fraction < 1.0) {
            return Err(CliError::Config("reward.holdout_fraction must lie in (0, 1)".into()));
        }
        if self.n_timesteps == 0 || self.data.count == 0 {
            return Err(CliError::Config("n_timesteps and data.count must be positive".into()));
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let model = DiffusionModel::from_checkpoint(&run.read_checkpoint(&self.checkpoint)?)?;
        let pipeline = LoadedPipeline::load(run, &self.pipeline)?;
        let data: Vec<Vec<f64>> = self
            .data
            .dataset
            .sample(self.data.count, self.data.data_seed)
            .iter()
            .map(|p| p.to_vec())
            .collect();
        let ds = build_reward_dataset(&model, pipeline.target(), &data, self.n_timesteps, sample_seed(run.seed, 0))?;
        let mut cfg = self.reward.clone();
        cfg.train.seed = run.seed;
        let trained = train_reward(&ds, model.num_timesteps(), &cfg)?;
        run.write_checkpoint("reward.ckpt", &trained.model.to_checkpoint())?;
        run.write_with("reward_dataset.csv", |w| {
            writeln!(w, "index,t,psi,label,{}", (0..model.data_dim()).map(|k| format!("z{k}")).collect::<Vec<_>>().join(","))?;
            for (i, r) in ds.records.iter().enumerate() {
                let z: Vec<String> = r.z_t.iter().map(f64::to_string).collect();
                writeln!(w, "{i},{},{},{},{}", r.t, r.psi, r.label, z.join(","))?;
            }
            Ok(())
        })?;
        run.write_json(
            "reward_report.json",
            &json!({
                "schema_version": 1,
                "pipeline": ds.pipeline,
                "edges": ds.edges,
                "skipped": ds.skipped,
                "report": trained.report,
            }),
        )
    }
}

/// Surrogate-versus-oracle comparison at one step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheck {
    pub rho: f64,
    pub count: usize,
    #[serde(default = "oracle_step")]
    pub step: f64,
}

fn oracle_step() -> f64 {
    ORACLE_STEP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Guide {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// DDPM checkpoint written by `train-ddpm`.
    pub checkpoint: PathBuf,
    /// Reward checkpoint written by `train-reward`.
    pub reward: PathBuf,
    pub pipeline: Pipeline,
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    pub count: usize,
    #[serde(default = "default_target")]
    pub target: GuidanceTarget,
    /// Reverse steps at which the shift is applied; omitted means all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timesteps: Option<Vec<usize>>,
    /// `std` (default) scales the shift by σ_t, `variance` by β_t; `unit` applies `ρ·∇` as is.
    #[serde(default)]
    pub scale: ShiftScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
}

fn default_rhos() -> Vec<f64> {
    vec![-1.5, -1.0, 0.0, 1.0, 1.5]
}

fn default_target() -> GuidanceTarget {
    GuidanceTarget::MaximizePsi
}

global_keys!(Guide);

impl Command for Guide {
    const NAME: &'static str = "guide";

    fn validate(&self) -> CliResult<()> {
        if self.rhos.is_empty() || self.rhos.iter().any(|r| !r.is_finite()) {
            return Err(CliError::Config("rhos must be a non-empty list of finite numbers".into()));
        }
        if self.count < 2 {
            return Err(CliError::Config("count must be at least 2".into()));
        }
        if let Some(o) = &self.oracle {
            if !(o.rho.is_finite() && o.step > 0.0) || o.count == 0 {
                return Err(CliError::Config("oracle: rho must be finite, step and count positive".into()));
            }
            if let GuidanceTarget::Bin(_) = self.target {
                return Err(CliError::Config("oracle: needs target maximize_psi or minimize_psi".into()));
            }
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let model = DiffusionModel::from_checkpoint(&run.read_checkpoint(&self.checkpoint)?)?;
        let reward = RewardModel::from_checkpoint(&run.read_checkpoint(&self.reward)?)?;
        let pipeline = LoadedPipeline::load(run, &self.pipeline)?;
        let seeds: Vec<u64> = (0..self.count).map(|i| sample_seed(run.seed, i)).collect();
        let tag = pipeline.target().tag();
        let template = GuidanceConfig {
            rho: 0.0,
            target: self.target,
            timesteps: self.timesteps.clone(),
            scale: self.scale,
        };
        let manifest = guidance_sweep(
            &model,
            &reward,
            tag,
            &self.rhos,
            &seeds,
            &template,
            |z| pipeline.final_psi(&model, z),
            run.workers,
        )?;
        run.write_json("guidance.json", &manifest)?;

        if let Some(o) = &self.oracle {
            let oracle = |z: &[f64], t: usize| pipeline.oracle_psi(&model, z, t);
            let final_of = |traj: Vec<(usize, Vec<f64>)>| -> Result<Option<f64>> {
                let z0 = &traj.last().expect("non-empty trajectory").1;
                match pipeline.final_psi(&model, z0) {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::ZeroMap) => Ok(None),
                    Err(e) => Err(e),
                }
            };
            let cfg = GuidanceConfig {
                rho: o.rho,
                ..template.clone()
            };
            let base = GuidanceConfig::new(0.0);
            let base_seed = run.seed;
            let scores = map_indexed(run.workers, o.count, |i| {
                let s = sample_seed(base_seed, i);
                Ok([
                    final_of(guided_sample(&model, &reward, &base, s)?)?,
                    final_of(guided_sample(&model, &reward, &cfg, s)?)?,
                    final_of(oracle_guided_sample(&model, &oracle, &cfg, s, o.step)?)?,
                ])
            })?;
            let col = |k: usize| mean(&scores.iter().filter_map(|r| r[k]).collect::<Vec<_>>());
            let (unguided, surrogate, exact) = (col(0), col(1), col(2));
            let (ds, dx) = (surrogate - unguided, exact - unguided);
            run.write_json(
                "oracle.json",
                &json!({
                    "schema_version": 1,
                    "rho": o.rho,
                    "count": o.count,
                    "step": o.step,
                    "unguided_mean_psi": unguided,
                    "surrogate_mean_psi": surrogate,
                    "oracle_mean_psi": exact,
                    "surrogate_shift": ds,
                    "oracle_shift": dx,
                    "signs_agree": ds.signum() == dx.signum(),
                }),
            )?;
        }
        Ok(())
    }
}
