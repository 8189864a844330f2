//! `descriptors`, `grid`, `slice`.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use cpwl_geometry::analysis::{density_scaling_correlation, rank_sum, stats::mean, LatentBox};
use cpwl_geometry::descriptors::{descriptor_grid, descriptors_at, GridSpec};
use cpwl_geometry::net::PiecewiseAffine;
use cpwl_geometry::parallel::map_indexed;
use cpwl_geometry::partition2d::{compute_partition_with, square, Coloring, PartitionOptions, DEFAULT_MAX_REGIONS};
use cpwl_geometry::linalg::rng;

use super::{global_keys, Command};
use crate::run::{CliError, CliResult, Run};
use crate::specs::{build_slice, ComplexitySpec, LoadedMap, MapRef, SliceAnchors};

/// Where the latents of a `descriptors` run come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatentSource {
    /// Uniform on `[-half_width, half_width]^E`.
    Uniform { count: usize, half_width: f64 },
    /// Isotropic Gaussian with standard deviation `std`.
    Normal { count: usize, std: f64 },
    /// One latent per line, comma-separated, no header.
    Csv { path: PathBuf },
}

impl LatentSource {
    fn load(&self, run: &mut Run, dim: usize) -> CliResult<Vec<Vec<f64>>> {
        let mut r = rng::derive(run.seed, 10);
        match self {
            LatentSource::Uniform { count, half_width } => Ok((0..*count)
                .map(|_| (0..dim).map(|_| rng::uniform(&mut r, -half_width, *half_width)).collect())
                .collect()),
            LatentSource::Normal { count, std } => Ok((0..*count)
                .map(|_| rng::normal_vec::<f64>(&mut r, dim).into_iter().map(|v| v * std).collect())
                .collect()),
            LatentSource::Csv { path } => {
                let text = String::from_utf8(run.read_input(path)?)
                    .map_err(|_| CliError::Runtime(format!("{} is not UTF-8", path.display())))?;
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .enumerate()
                    .map(|(i, l)| {
                        let z: Vec<f64> = l
                            .split(',')
                            .map(|v| v.trim().parse::<f64>())
                            .collect::<Result<_, _>>()
                            .map_err(|e| CliError::Runtime(format!("{} line {}: {e}", path.display(), i + 1)))?;
                        if z.len() != dim {
                            return Err(CliError::Runtime(format!(
                                "{} line {}: {} values, expected {dim}",
                                path.display(),
                                i + 1,
                                z.len()
                            )));
                        }
                        Ok(z)
                    })
                    .collect()
            }
        }
    }
}

/// Mean over finite values; `None` when there are none.
fn finite_mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| mean(&v))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Descriptors {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub map: MapRef,
    pub complexity: ComplexitySpec,
    pub latents: LatentSource,
    /// Correlates −ψ with the log KDE density of the outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(default = "one")]
    pub bandwidth_scale: f64,
    /// Reflect latents across the faces of the uniform box; needs `kind = "uniform"`.
    #[serde(default)]
    pub reflect: bool,
}

fn one() -> f64 {
    1.0
}

global_keys!(Descriptors);

impl Command for Descriptors {
    const NAME: &'static str = "descriptors";

    fn validate(&self) -> CliResult<()> {
        if let Some(d) = &self.density {
            if !(d.bandwidth_scale > 0.0) {
                return Err(CliError::Config("density.bandwidth_scale must be positive".into()));
            }
            if d.reflect && !matches!(self.latents, LatentSource::Uniform { .. }) {
                return Err(CliError::Config("density.reflect needs latents.kind = \"uniform\"".into()));
            }
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let map = LoadedMap::load(run, &self.map, "map")?;
        let dim = map.input_dim();
        let cfg = self.complexity.build(dim, "complexity")?;
        let latents = self.latents.load(run, dim)?;
        let rows = map_indexed(run.workers, latents.len(), |i| descriptors_at(&map, &latents[i], &cfg))?;
        run.write_with("descriptors.csv", |w| {
            write!(w, "index,psi,nu,delta")?;
            for k in 0..dim {
                write!(w, ",z{k}")?;
            }
            writeln!(w)?;
            for (i, (d, z)) in rows.iter().zip(&latents).enumerate() {
                write!(w, "{i},{},{},{}", d.psi, d.nu, d.delta)?;
                for v in z {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
        run.write_json(
            "summary.json",
            &json!({
                "schema_version": 1,
                "count": rows.len(),
                "undefined": rows.iter().filter(|d| !d.psi.is_finite()).count(),
                "psi_mean": finite_mean(rows.iter().map(|d| d.psi)),
                "nu_mean": finite_mean(rows.iter().map(|d| d.nu)),
                "delta_mean": finite_mean(rows.iter().map(|d| d.delta as f64)),
            }),
        )?;
        if let Some(d) = &self.density {
            let boundary = match (&self.latents, d.reflect) {
                (LatentSource::Uniform { half_width, .. }, true) => Some(LatentBox::square(dim, *half_width)),
                _ => None,
            };
            let c = density_scaling_correlation(&map, &latents, d.bandwidth_scale, boundary.as_ref(), run.workers)?;
            run.write_json(
                "density.json",
                &json!({
                    "schema_version": 1,
                    "spearman": c.spearman,
                    "pearson": c.pearson,
                    "n": c.n,
                    "bandwidth": c.bandwidth,
                    "reflect": d.reflect,
                }),
            )?;
        }
        Ok(())
    }
}

/// Annulus `| ‖p − center‖ − radius | < half_width` in slice coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub center: [f64; 2],
    pub radius: f64,
    pub half_width: f64,
}

impl Band {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (((x - self.center[0]).powi(2) + (y - self.center[1]).powi(2)).sqrt() - self.radius).abs() < self.half_width
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub map: MapRef,
    pub grid: GridSpec,
    /// Omitted: full frame with radius equal to the grid spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceAnchors>,
    /// Compares descriptor means inside and outside a band of the plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
}

global_keys!(Grid);

impl Command for Grid {
    const NAME: &'static str = "grid";

    fn validate(&self) -> CliResult<()> {
        self.grid.validate().map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let map = LoadedMap::load(run, &self.map, "map")?;
        let dim = map.input_dim();
        let slice = build_slice(self.slice.as_ref(), dim, "slice")?;
        let spacing = (self.grid.x_range.1 - self.grid.x_range.0) / (self.grid.resolution - 1) as f64;
        let cfg = match &self.complexity {
            Some(c) => c.build(dim, "complexity")?,
            None => ComplexitySpec {
                radius: spacing,
                subspace_dim: None,
                frame_seed: 0,
            }
            .build(dim, "complexity")?,
        };
        let grid = descriptor_grid(&map, &slice, &self.grid, &cfg, run.workers)?;
        run.write_with("grid.csv", |w| grid.write_csv(w))?;

        let mut summary = json!({
            "schema_version": 1,
            "resolution": self.grid.resolution,
            "psi_mean": finite_mean(grid.psi()),
            "nu_mean": finite_mean(grid.nu()),
            "delta_mean": finite_mean(grid.delta().into_iter().map(|d| d as f64)),
        });
        if let Some(band) = &self.band {
            let n = self.grid.resolution;
            let (mut psi_in, mut psi_out, mut delta_in, mut delta_out) = (vec![], vec![], vec![], vec![]);
            for (k, c) in grid.cells.iter().enumerate() {
                let (x, y) = self.grid.point(k % n, k / n);
                let inside = band.contains(x, y);
                if c.psi.is_finite() {
                    if inside { &mut psi_in } else { &mut psi_out }.push(c.psi);
                }
                if inside { &mut delta_in } else { &mut delta_out }.push(c.delta as f64);
            }
            if psi_in.is_empty() || psi_out.is_empty() {
                return Err(CliError::Runtime("band leaves no grid point on one side".into()));
            }
            summary["band"] = json!({
                "in_count": delta_in.len(),
                "out_count": delta_out.len(),
                "psi_in_mean": mean(&psi_in),
                "psi_out_mean": mean(&psi_out),
                "delta_in_mean": mean(&delta_in),
                "delta_out_mean": mean(&delta_out),
                "p_psi_in_lower": rank_sum(&psi_out, &psi_in)?.p_less,
                "p_delta_in_higher": rank_sum(&delta_out, &delta_in)?.p_greater,
            });
        }
        run.write_json("summary.json", &summary)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slice {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub map: MapRef,
    /// The partition covers `[-half_width, half_width]²` in slice coordinates.
    pub half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceAnchors>,
    #[serde(default = "default_coloring")]
    pub coloring: Coloring,
    #[serde(default = "default_max_regions")]
    pub max_regions: usize,
}

fn default_coloring() -> Coloring {
    Coloring::Psi
}

fn default_max_regions() -> usize {
    DEFAULT_MAX_REGIONS
}

global_keys!(Slice);

impl Command for Slice {
    const NAME: &'static str = "slice";

    fn validate(&self) -> CliResult<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(CliError::Config("half_width must be positive".into()));
        }
        if self.map.timestep.is_some() || self.map.network == "denoiser" {
            return Err(CliError::Config("map.network: slice needs a plain network, not a denoiser".into()));
        }
        Ok(())
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let map = LoadedMap::load(run, &self.map, "map")?;
        let net = map.network().expect("validated as a plain network");
        let slice = build_slice(self.slice.as_ref(), net.input_dim(), "slice")?;
        let partition = compute_partition_with(
            net,
            &slice,
            &square(self.half_width),
            PartitionOptions {
                max_regions: self.max_regions,
            },
        )?;
        run.write_with("partition.json", |w| partition.export_polygons(w, self.coloring))?;
        run.write_json(
            "summary.json",
            &json!({
                "schema_version": 1,
                "regions": partition.len(),
                "knot_segments": partition.knots.len(),
                "domain_area": partition.domain_area(),
            }),
        )
    }
}
