//! `ood`, `dynamics`, `trajectory`, `report`.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use cpwl_geometry::analysis::stats::mean;
use cpwl_geometry::analysis::{dynamics_log_summary, level_set_stats, ood_report, rank_sum, vendi_score};
use cpwl_geometry::descriptors::{descriptors_at, DescriptorTriple};
use cpwl_geometry::models::data::uniform_noise_images;
use cpwl_geometry::models::ddpm::{denoise_trajectory, initial_noise, DiffusionModel};
use cpwl_geometry::models::vae::{train_vae, Vae, VaeConfig};
use cpwl_geometry::models::write_log_csv;
use cpwl_geometry::parallel::map_indexed;

use super::train::validate_vae;
use super::{global_keys, Command};
use crate::run::{sample_seed, CliError, CliResult, Run};
use crate::specs::{ComplexitySpec, ImageData};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ood {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// VAE checkpoint written by `train-vae`.
    pub checkpoint: PathBuf,
    /// In-distribution samples are the evaluation images.
    pub data: ImageData,
    /// Number of uniform-noise images scored as out-of-distribution.
    pub ood_count: usize,
    pub complexity: ComplexitySpec,
}

global_keys!(Ood);

impl Command for Ood {
    const NAME: &'static str = "ood";

    fn validate(&self) -> CliResult<()> {
        self.data.validate("data")?;
        if self.ood_count == 0 {
            return Err(CliError::Config("ood_count must be positive".into()));
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let vae = Vae::from_checkpoint(&run.read_checkpoint(&self.checkpoint)?)?;
        let (_, eval) = self.data.load(run)?;
        let noise = uniform_noise_images(self.ood_count, eval.width, eval.height, sample_seed(run.seed, 0));
        let cfg = self.complexity.build(vae.decoder.input_dim(), "complexity")?;
        let report = ood_report(&vae.decoder, |x| vae.encode_mean(x), &eval.images, &noise.images, &cfg, run.workers)?;
        run.write_json("ood.json", &report)?;
        run.write_with("ood_scores.csv", |w| {
            writeln!(w, "set,index,psi,nu")?;
            for (set, psi, nu) in [("in", &report.in_psi, &report.in_nu), ("out", &report.out_psi, &report.out_nu)] {
                for (i, (p, n)) in psi.iter().zip(nu).enumerate() {
                    writeln!(w, "{set},{i},{p},{n}")?;
                }
            }
            Ok(())
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// `model.train.noise_std` is overridden by each entry of `noise_levels`.
    pub model: VaeConfig,
    pub data: ImageData,
    pub noise_levels: Vec<f64>,
    /// Final descriptor values average this many trailing log rows.
    #[serde(default = "default_tail")]
    pub tail_rows: usize,
}

fn default_tail() -> usize {
    1
}

global_keys!(Dynamics);

impl Command for Dynamics {
    const NAME: &'static str = "dynamics";

    fn validate(&self) -> CliResult<()> {
        validate_vae(&self.model)?;
        self.data.validate("data")?;
        if self.noise_levels.is_empty() {
            return Err(CliError::Config("noise_levels must not be empty".into()));
        }
        for &s in &self.noise_levels {
            let mut t = self.model.train.clone();
            t.noise_std = s;
            crate::run::check_key("noise_levels", t.validate())?;
        }
        if self.tail_rows == 0 {
            return Err(CliError::Config("tail_rows must be positive".into()));
        }
        if self.model.train.log_every == 0 {
            return Err(CliError::Config("model.train.log_every must be positive".into()));
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let (train, eval) = self.data.load(run)?;
        let mut runs = Vec::new();
        for (k, &noise) in self.noise_levels.iter().enumerate() {
            let mut cfg = self.model.clone();
            cfg.train.seed = run.seed;
            cfg.train.noise_std = noise;
            let trained = train_vae(&train, &eval, &cfg)?;
            run.write_with(&format!("log_noise_{k}.csv"), |w| write_log_csv(&trained.log, w))?;
            let summary = dynamics_log_summary(&trained.log)?;
            let tail = &trained.log[trained.log.len().saturating_sub(self.tail_rows)..];
            runs.push(json!({
                "noise_std": noise,
                "log": format!("log_noise_{k}.csv"),
                "end_psi": mean(&tail.iter().map(|r| r.psi_mean).collect::<Vec<_>>()),
                "end_delta": mean(&tail.iter().map(|r| r.delta_mean).collect::<Vec<_>>()),
                "summary": summary,
            }));
        }
        run.write_json("dynamics.json", &json!({ "schema_version": 1, "runs": runs }))
    }
}

/// Trajectories ending within `radius` of `point` count as memorized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Memorization {
    pub point: [f64; 2],
    pub radius: f64,
    /// The late part of a trajectory is its last this many reverse steps.
    pub late_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// DDPM checkpoint written by `train-ddpm`.
    pub checkpoint: PathBuf,
    pub count: usize,
    pub complexity: ComplexitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memorization: Option<Memorization>,
}

global_keys!(Trajectory);

/// Descriptors of the step map `z_t ↦ z_{t−1}` at each `z_t`, `t = T … 1`.
fn step_descriptors(
    model: &DiffusionModel,
    traj: &[(usize, Vec<f64>)],
    cfg: &cpwl_geometry::descriptors::ComplexityConfig<f64>,
) -> cpwl_geometry::Result<Vec<DescriptorTriple<f64>>> {
    traj.iter()
        .filter(|(t, _)| *t >= 1)
        .map(|(t, z)| descriptors_at(&model.step_map(*t)?, z, cfg))
        .collect()
}

impl Command for Trajectory {
    const NAME: &'static str = "trajectory";

    fn validate(&self) -> CliResult<()> {
        if self.count == 0 {
            return Err(CliError::Config("count must be positive".into()));
        }
        if let Some(m) = &self.memorization {
            if !(m.radius > 0.0) || m.late_steps == 0 {
                return Err(CliError::Config("memorization.radius and memorization.late_steps must be positive".into()));
            }
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let model = DiffusionModel::from_checkpoint(&run.read_checkpoint(&self.checkpoint)?)?;
        let cfg = self.complexity.build(model.data_dim(), "complexity")?;
        if let Some(m) = &self.memorization {
            if m.late_steps > model.num_timesteps() {
                return Err(CliError::Config("memorization.late_steps exceeds the number of timesteps".into()));
            }
        }
        let base = run.seed;
        let runs = map_indexed(run.workers, self.count, |i| {
            let s = sample_seed(base, i);
            let traj = denoise_trajectory(&model, &initial_noise(model.data_dim(), s), s, None)?;
            let desc = step_descriptors(&model, &traj, &cfg)?;
            Ok((traj, desc))
        })?;
        run.write_with("trajectories.csv", |w| {
            writeln!(w, "trajectory,t,x,y,psi,nu,delta")?;
            for (i, (traj, desc)) in runs.iter().enumerate() {
                for ((t, z), d) in traj.iter().zip(desc) {
                    writeln!(w, "{i},{t},{},{},{},{},{}", z[0], z[1], d.psi, d.nu, d.delta)?;
                }
                let z0 = &traj.last().expect("non-empty trajectory").1;
                writeln!(w, "{i},0,{},{},,,", z0[0], z0[1])?;
            }
            Ok(())
        })?;

        let big_t = model.num_timesteps();
        let per_step: Vec<_> = (0..big_t)
            .map(|k| {
                let col = |f: &dyn Fn(&DescriptorTriple<f64>) -> f64| {
                    let v: Vec<f64> = runs.iter().map(|(_, d)| f(&d[k])).filter(|v| v.is_finite()).collect();
                    (!v.is_empty()).then(|| mean(&v))
                };
                json!({
                    "t": big_t - k,
                    "psi_mean": col(&|d| d.psi),
                    "nu_mean": col(&|d| d.nu),
                    "delta_mean": col(&|d| d.delta as f64),
                })
            })
            .collect();
        let mut summary = json!({ "schema_version": 1, "count": self.count, "per_step": per_step });
        if let Some(m) = &self.memorization {
            let (mut memorized, mut other) = (Vec::new(), Vec::new());
            for (traj, desc) in &runs {
                let z0 = &traj.last().expect("non-empty trajectory").1;
                let late: Vec<f64> = desc[big_t - m.late_steps..].iter().map(|d| d.psi).filter(|v| v.is_finite()).collect();
                if late.is_empty() {
                    continue;
                }
                let dist = ((z0[0] - m.point[0]).powi(2) + (z0[1] - m.point[1]).powi(2)).sqrt();
                if dist < m.radius { &mut memorized } else { &mut other }.push(mean(&late));
            }
            let test = if memorized.is_empty() || other.is_empty() {
                None
            } else {
                Some(rank_sum(&other, &memorized)?)
            };
            summary["memorization"] = json!({
                "memorized_count": memorized.len(),
                "other_count": other.len(),
                "memorized_late_psi_mean": (!memorized.is_empty()).then(|| mean(&memorized)),
                "other_late_psi_mean": (!other.is_empty()).then(|| mean(&other)),
                "p_memorized_lower": test.map(|t| t.p_less),
            });
        }
        run.write_json("summary.json", &summary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descriptor {
    Psi,
    Nu,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    /// Decoded images.
    Pixels,
    /// Encoded latent means.
    Latents,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// VAE checkpoint written by `train-vae`.
    pub checkpoint: PathBuf,
    /// Samples are the evaluation images.
    pub data: ImageData,
    pub descriptor: Descriptor,
    pub n_bins: usize,
    pub features: Features,
    pub complexity: ComplexitySpec,
}

global_keys!(Report);

impl Command for Report {
    const NAME: &'static str = "report";

    fn validate(&self) -> CliResult<()> {
        self.data.validate("data")?;
        if self.n_bins < 2 {
            return Err(CliError::Config("n_bins must be at least 2".into()));
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let vae = Vae::from_checkpoint(&run.read_checkpoint(&self.checkpoint)?)?;
        let (_, eval) = self.data.load(run)?;
        let cfg = self.complexity.build(vae.decoder.input_dim(), "complexity")?;
        let scored = map_indexed(run.workers, eval.len(), |i| {
            let z = vae.encode_mean(&eval.images[i])?;
            let d = descriptors_at(&vae.decoder, &z, &cfg)?;
            let value = match self.descriptor {
                Descriptor::Psi => d.psi,
                Descriptor::Nu => d.nu,
                Descriptor::Delta => d.delta as f64,
            };
            let feature = match self.features {
                Features::Pixels => vae.decode(&z)?,
                Features::Latents => z,
            };
            Ok((feature, value))
        })?;
        let (features, values): (Vec<Vec<f64>>, Vec<f64>) = scored.into_iter().unzip();
        let tag = serde_json::to_value(self.descriptor)?.as_str().unwrap_or_default().to_string();
        let rows = level_set_stats(&features, &values, self.n_bins, &tag, |members| {
            vendi_score(&members.iter().map(|f| (*f).clone()).collect::<Vec<_>>())
        })?;
        run.write_with("level_sets.csv", |w| {
            writeln!(w, "bin,lower,upper,count,vendi,flagged")?;
            for r in &rows {
                let m = r.metric.map(|v| v.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{},{m},{}", r.bin, r.lower, r.upper, r.count, r.flagged)?;
            }
            Ok(())
        })?;
        run.write_json(
            "level_sets.json",
            &json!({ "schema_version": 1, "descriptor": tag, "metric": "vendi", "rows": rows }),
        )
    }
}
