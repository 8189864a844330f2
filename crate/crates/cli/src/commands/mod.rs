//! One config type per subcommand, all driven by [`run_command`].

mod experiments;
mod geometry;
mod guide;
mod train;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::run::{CliError, CliResult, Run};

pub use experiments::{Dynamics, Ood, Report, Trajectory};
pub use geometry::{Descriptors, Grid, Slice};
pub use guide::{Guide, TrainReward};
pub use train::{TrainDdpm, TrainToy, TrainVae};

/// Top-level `seed` and `out` keys every config file carries.
pub trait GlobalKeys {
    fn seed_mut(&mut self) -> &mut u64;
    fn out_mut(&mut self) -> &mut Option<PathBuf>;
}

macro_rules! global_keys {
    ($t:ty) => {
        impl $crate::commands::GlobalKeys for $t {
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
            fn out_mut(&mut self) -> &mut Option<std::path::PathBuf> {
                &mut self.out
            }
        }
    };
}
pub(crate) use global_keys;

pub trait Command: GlobalKeys + Serialize + DeserializeOwned {
    const NAME: &'static str;

    /// Semantic checks beyond what deserialization enforces.
    fn validate(&self) -> CliResult<()> {
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()>;
}

/// Command-line overrides applied on top of the config file.
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: usize,
}

pub fn run_command<C: Command>(config: &Path, ov: &Overrides) -> CliResult<()> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
    let mut cfg: C = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    if let Some(s) = ov.seed {
        *cfg.seed_mut() = s;
    }
    if let Some(o) = &ov.out {
        *cfg.out_mut() = Some(o.clone());
    }
    if ov.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    cfg.validate()?;
    let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&ov.out, cfg.out_mut().clone()) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => base.join(o),
        (None, Some(o)) => o,
        (None, None) => return Err(CliError::Config("out: no output directory (set `out` or pass --out)".into())),
    };
    // The copy lives in the output directory; leaving `out` out keeps it location-independent.
    *cfg.out_mut() = None;
    let resolved = toml::to_string(&cfg).map_err(|e| CliError::Runtime(format!("cannot serialize resolved config: {e}")))?;
    std::fs::create_dir_all(&out)?;
    log::info!("{} writing to {}", C::NAME, out.display());
    let mut run = Run::new(C::NAME, *cfg.seed_mut(), ov.workers, out, base);
    cfg.execute(&mut run)?;
    run.finish(&resolved)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parses<C: Command>(text: &str) {
        if let Err(e) = toml::from_str::<C>(text) {
            panic!("{}: {e}", C::NAME);
        }
    }

    #[test]
    fn example_configs_parse() {
        parses::<TrainToy>(include_str!("../../../../configs/train-toy.toml"));
        parses::<TrainVae>(include_str!("../../../../configs/train-vae.toml"));
        parses::<TrainDdpm>(include_str!("../../../../configs/train-ddpm.toml"));
        parses::<Descriptors>(include_str!("../../../../configs/descriptors.toml"));
        parses::<Grid>(include_str!("../../../../configs/grid.toml"));
        parses::<Slice>(include_str!("../../../../configs/slice.toml"));
        parses::<Ood>(include_str!("../../../../configs/ood.toml"));
        parses::<Dynamics>(include_str!("../../../../configs/dynamics.toml"));
        parses::<Trajectory>(include_str!("../../../../configs/trajectory.toml"));
        parses::<TrainReward>(include_str!("../../../../configs/train-reward.toml"));
        parses::<Guide>(include_str!("../../../../configs/guide.toml"));
        parses::<Report>(include_str!("../../../../configs/report.toml"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = include_str!("../../../../configs/train-ddpm.toml");
        let cfg: TrainDdpm = toml::from_str(text).unwrap();
        let again: TrainDdpm = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(toml::to_string(&cfg).unwrap(), toml::to_string(&again).unwrap());
    }
}
