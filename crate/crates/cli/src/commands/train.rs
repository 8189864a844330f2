//! `train-toy`, `train-vae`, `train-ddpm`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use cpwl_geometry::models::ddpm::{sample, train_ddpm, DdpmConfig};
use cpwl_geometry::models::toy::{heldout_mse, train_toy_generator, ToyConfig};
use cpwl_geometry::models::vae::{train_vae, VaeConfig};
use cpwl_geometry::models::{write_log_csv, LogRow};
use cpwl_geometry::net::Checkpoint;
use cpwl_geometry::parallel::map_indexed;

use super::{global_keys, Command};
use crate::run::{check_key, sample_seed, CliError, CliResult, Run};
use crate::specs::ImageData;

fn last_loss(log: &[LogRow]) -> Option<f64> {
    log.last().map(|r| r.loss)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainToy {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: ToyConfig,
    /// Side of the regular grid used for the held-out error.
    #[serde(default = "default_heldout_grid")]
    pub heldout_grid: usize,
}

fn default_heldout_grid() -> usize {
    64
}

global_keys!(TrainToy);

impl Command for TrainToy {
    const NAME: &'static str = "train-toy";

    fn validate(&self) -> CliResult<()> {
        check_key("model.train", self.model.train.validate())?;
        check_key("model.surface", self.model.surface.validate())?;
        if !(self.model.domain > 0.0) {
            return Err(CliError::Config("model.domain must be positive".into()));
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let mut cfg = self.model.clone();
        cfg.train.seed = run.seed;
        let trained = train_toy_generator(&cfg)?;
        let mse = heldout_mse(&trained.net, &cfg.surface, cfg.domain, self.heldout_grid)?;
        let ckpt = Checkpoint {
            networks: vec![("generator".into(), trained.net)],
            meta: json!({ "model": "toy", "domain": cfg.domain }),
        };
        run.write_checkpoint("toy.ckpt", &ckpt)?;
        run.write_with("train_log.csv", |w| write_log_csv(&trained.log, w))?;
        run.write_json(
            "metrics.json",
            &json!({ "schema_version": 1, "heldout_mse": mse, "final_loss": last_loss(&trained.log) }),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainVae {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: VaeConfig,
    pub data: ImageData,
}

global_keys!(TrainVae);

pub(crate) fn validate_vae(model: &VaeConfig) -> CliResult<()> {
    check_key("model.train", model.train.validate())?;
    if model.latent_dim == 0 {
        return Err(CliError::Config("model.latent_dim must be positive".into()));
    }
    if !(model.kl_weight >= 0.0) {
        return Err(CliError::Config("model.kl_weight must be non-negative".into()));
    }
    Ok(())
}

impl Command for TrainVae {
    const NAME: &'static str = "train-vae";

    fn validate(&self) -> CliResult<()> {
        validate_vae(&self.model)?;
        self.data.validate("data")
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let (train, eval) = self.data.load(run)?;
        let mut cfg = self.model.clone();
        cfg.train.seed = run.seed;
        let trained = train_vae(&train, &eval, &cfg)?;
        run.write_checkpoint("vae.ckpt", &trained.vae.to_checkpoint())?;
        run.write_with("train_log.csv", |w| write_log_csv(&trained.log, w))?;
        let last = trained.log.last();
        run.write_json(
            "metrics.json",
            &json!({
                "schema_version": 1,
                "final_loss": last.map(|r| r.loss),
                "final_psi_mean": last.map(|r| r.psi_mean),
                "final_delta_mean": last.map(|r| r.delta_mean),
            }),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDdpm {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: DdpmConfig,
    /// Unguided samples drawn from the trained model.
    #[serde(default)]
    pub samples: usize,
}

global_keys!(TrainDdpm);

impl Command for TrainDdpm {
    const NAME: &'static str = "train-ddpm";

    fn validate(&self) -> CliResult<()> {
        check_key("model.train", self.model.train.validate())?;
        check_key("model.schedule", self.model.schedule.build().map(|_| ()))?;
        if self.model.num_samples == 0 {
            return Err(CliError::Config("model.num_samples must be positive".into()));
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let mut cfg = self.model.clone();
        cfg.train.seed = run.seed;
        let data = cfg.training_data();
        let trained = train_ddpm(&data, &cfg)?;
        run.write_checkpoint("ddpm.ckpt", &trained.model.to_checkpoint())?;
        run.write_with("train_log.csv", |w| write_log_csv(&trained.log, w))?;
        run.write_with("training_data.csv", |w| {
            use std::io::Write;
            writeln!(w, "index,x,y")?;
            for (i, p) in data.iter().enumerate() {
                writeln!(w, "{i},{},{}", p[0], p[1])?;
            }
            Ok(())
        })?;
        let base = run.seed;
        let points = map_indexed(run.workers, self.samples, |i| sample(&trained.model, sample_seed(base, i)))?;
        run.write_with("samples.csv", |w| {
            use std::io::Write;
            writeln!(w, "index,seed,x,y")?;
            for (i, p) in points.iter().enumerate() {
                writeln!(w, "{i},{},{},{}", sample_seed(base, i), p[0], p[1])?;
            }
            Ok(())
        })?;
        run.write_json(
            "metrics.json",
            &json!({ "schema_version": 1, "final_loss": last_loss(&trained.log), "training_points": data.len() }),
        )
    }
}
