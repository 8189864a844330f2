//! Config fragments shared by several subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cpwl_geometry::descriptors::ComplexityConfig;
use cpwl_geometry::guidance::rescale_decoder_input;
use cpwl_geometry::models::data::{gunzip_if_compressed, parse_idx_images, synthetic_digits, ImageSet};
use cpwl_geometry::models::ddpm::DiffusionModel;
use cpwl_geometry::net::{ActivationPattern, CpwlNetwork, LocalAffine, PiecewiseAffine};
use cpwl_geometry::partition2d::Slice2D;
use cpwl_geometry::Result;

use crate::run::{CliError, CliResult, Run};

/// Environment variable naming the directory that holds IDX image files.
pub const DATA_DIR_ENV: &str = "CPWL_DATA_DIR";

/// A network inside a checkpoint, optionally fixed to one diffusion step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapRef {
    /// Relative paths are resolved against the config file's directory.
    pub checkpoint: PathBuf,
    /// `generator` (toy), `decoder` (VAE) or `denoiser` (DDPM).
    pub network: String,
    /// Reverse step `t` of a DDPM checkpoint; the map is `z_t ↦ μ(z_t, t)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestep: Option<usize>,
    /// Multiplies the network input, i.e. analyses `G(s·z)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scale: Option<f64>,
}

pub enum LoadedMap {
    Net(CpwlNetwork<f64>),
    Step(DiffusionModel, usize),
}

impl LoadedMap {
    pub fn load(run: &mut Run, r: &MapRef, key: &str) -> CliResult<Self> {
        let ckpt = run.read_checkpoint(&r.checkpoint)?;
        let map = if r.network == "denoiser" {
            let t = r
                .timestep
                .ok_or_else(|| CliError::Config(format!("{key}.timestep is required for a denoiser")))?;
            if r.input_scale.is_some() {
                return Err(CliError::Config(format!("{key}.input_scale is not supported for a denoiser")));
            }
            let model = DiffusionModel::from_checkpoint(&ckpt)?;
            model.step_map(t)?;
            LoadedMap::Step(model, t)
        } else {
            if r.timestep.is_some() {
                return Err(CliError::Config(format!("{key}.timestep applies only to network = \"denoiser\"")));
            }
            let net = ckpt.network(&r.network)?.clone();
            match r.input_scale {
                Some(s) => LoadedMap::Net(rescale_decoder_input(&net, s)?),
                None => LoadedMap::Net(net),
            }
        };
        Ok(map)
    }

    pub fn network(&self) -> Option<&CpwlNetwork<f64>> {
        match self {
            LoadedMap::Net(n) => Some(n),
            LoadedMap::Step(..) => None,
        }
    }
}

impl PiecewiseAffine<f64> for LoadedMap {
    fn input_dim(&self) -> usize {
        match self {
            LoadedMap::Net(n) => n.input_dim(),
            LoadedMap::Step(m, _) => m.data_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            LoadedMap::Net(n) => n.output_dim(),
            LoadedMap::Step(m, _) => m.data_dim(),
        }
    }

    fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, ActivationPattern)> {
        match self {
            LoadedMap::Net(n) => PiecewiseAffine::forward(n, z),
            LoadedMap::Step(m, t) => m.step_map(*t)?.forward(z),
        }
    }

    fn local_affine(&self, z: &[f64]) -> Result<LocalAffine<f64>> {
        match self {
            LoadedMap::Net(n) => PiecewiseAffine::local_affine(n, z),
            LoadedMap::Step(m, t) => m.step_map(*t)?.local_affine(z),
        }
    }
}

/// Neighbourhood used for local complexity δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySpec {
    /// ℓ1 radius of the probe neighbourhood.
    pub radius: f64,
    /// Random orthonormal probe directions; omitted means the full coordinate frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_dim: Option<usize>,
    #[serde(default)]
    pub frame_seed: u64,
}

impl ComplexitySpec {
    pub fn build(&self, input_dim: usize, key: &str) -> CliResult<ComplexityConfig<f64>> {
        let r = match self.subspace_dim {
            Some(p) if p < input_dim => ComplexityConfig::random(p, input_dim, self.radius, self.frame_seed),
            _ => ComplexityConfig::full(input_dim, self.radius),
        };
        r.map_err(|e| CliError::Config(format!("{key}: {e}")))
    }
}

/// Plane through three latents; omitted means the identity plane of a 2-D latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceAnchors {
    pub anchors: [Vec<f64>; 3],
}

pub fn build_slice(anchors: Option<&SliceAnchors>, input_dim: usize, key: &str) -> CliResult<Slice2D<f64>> {
    match anchors {
        Some(a) => {
            if a.anchors.iter().any(|v| v.len() != input_dim) {
                return Err(CliError::Config(format!("{key}.anchors must have length {input_dim}")));
            }
            let (slice, _) = Slice2D::through(&a.anchors[0], &a.anchors[1], &a.anchors[2])
                .map_err(|e| CliError::Config(format!("{key}.anchors: {e}")))?;
            Ok(slice)
        }
        None if input_dim == 2 => Ok(Slice2D::identity()),
        None => Err(CliError::Config(format!(
            "{key} is required for a {input_dim}-dimensional latent space"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    /// Procedurally rendered 28×28 digit glyphs.
    Synthetic,
    /// `train-images-idx3-ubyte[.gz]` and `t10k-images-idx3-ubyte[.gz]` from the data directory.
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageData {
    pub source: ImageSource,
    pub train_size: usize,
    pub eval_size: usize,
    /// Seed of the synthetic renderer; the eval set uses `data_seed + 1`.
    #[serde(default)]
    pub data_seed: u64,
}

impl ImageData {
    pub fn validate(&self, key: &str) -> CliResult<()> {
        if self.train_size == 0 || self.eval_size == 0 {
            return Err(CliError::Config(format!("{key}.train_size and {key}.eval_size must be positive")));
        }
        Ok(())
    }

    /// Training and evaluation images.
    pub fn load(&self, run: &mut Run) -> CliResult<(ImageSet, ImageSet)> {
        match self.source {
            ImageSource::Synthetic => Ok((
                synthetic_digits(self.train_size, self.data_seed),
                synthetic_digits(self.eval_size, self.data_seed.wrapping_add(1)),
            )),
            ImageSource::Idx => {
                let dir = std::env::var_os(DATA_DIR_ENV)
                    .map(PathBuf::from)
                    .ok_or_else(|| CliError::Config(format!("data.source = \"idx\" needs {DATA_DIR_ENV} to be set")))?;
                let train = read_idx(run, &dir, "train-images-idx3-ubyte", self.train_size)?;
                let eval = read_idx(run, &dir, "t10k-images-idx3-ubyte", self.eval_size)?;
                Ok((train, eval))
            }
        }
    }
}

fn read_idx(run: &mut Run, dir: &Path, stem: &str, n: usize) -> CliResult<ImageSet> {
    let plain = dir.join(stem);
    let path = if plain.exists() { plain } else { dir.join(format!("{stem}.gz")) };
    let bytes = gunzip_if_compressed(run.read_input(&path)?)?;
    let mut set = parse_idx_images(&bytes)?;
    if set.len() < n {
        return Err(CliError::Runtime(format!("{} holds {} images, {n} requested", path.display(), set.len())));
    }
    set.images.truncate(n);
    Ok(set)
}
