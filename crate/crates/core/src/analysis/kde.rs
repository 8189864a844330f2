//! Gaussian kernel density estimation and the ψ–density correlation.

use serde::{Deserialize, Serialize};

use crate::descriptors::local_scaling;
use crate::error::{Error, Result};
use crate::net::PiecewiseAffine;
use crate::parallel::map_indexed;

use super::stats::{mean, pearson, spearman, std_dev};

/// Gaussian-kernel density estimate over a fixed sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    samples: Vec<Vec<f64>>,
    bandwidth: f64,
}

/// Scott's rule `n^(−1/(D+4)) · σ̂`, with `σ̂` the mean per-coordinate standard deviation.
pub fn scott_bandwidth(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("Scott's rule needs at least two samples".into()));
    }
    let d = samples[0].len();
    let sigma = mean(
        &(0..d)
            .map(|j| std_dev(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()))
            .collect::<Vec<_>>(),
    );
    let h = (samples.len() as f64).powf(-1.0 / (d as f64 + 4.0)) * sigma;
    if !(h > 0.0) {
        return Err(Error::InvalidInput("samples have zero spread; bandwidth undefined".into()));
    }
    Ok(h)
}

impl KdeEstimate {
    /// `bandwidth = None` selects Scott's rule.
    pub fn new(samples: Vec<Vec<f64>>, bandwidth: Option<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("KDE needs a non-empty sample set".into()));
        }
        let d = samples[0].len();
        if d == 0 || samples.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidInput("KDE samples must share one positive dimension".into()));
        }
        let bandwidth = match bandwidth {
            Some(h) if h > 0.0 && h.is_finite() => h,
            Some(h) => return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}"))),
            None => scott_bandwidth(&samples)?,
        };
        Ok(KdeEstimate { samples, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn density(&self, query: &[f64]) -> Result<f64> {
        crate::error::check_dim(self.dim(), query.len(), "KDE query")?;
        let h2 = self.bandwidth * self.bandwidth;
        let norm = (2.0 * std::f64::consts::PI * h2).powf(-(self.dim() as f64) / 2.0);
        let sum: f64 = self
            .samples
            .iter()
            .map(|s| {
                let d2: f64 = s.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum();
                (-d2 / (2.0 * h2)).exp()
            })
            .sum();
        Ok(norm * sum / self.samples.len() as f64)
    }
}

/// Density at `query` of a Gaussian KDE over `samples`.
pub fn kde_density(samples: &[Vec<f64>], query: &[f64], h: Option<f64>) -> Result<f64> {
    KdeEstimate::new(samples.to_vec(), h)?.density(query)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub spearman: f64,
    pub pearson: f64,
    /// Points with a defined ψ that entered the correlation.
    pub n: usize,
    pub bandwidth: f64,
}

/// Axis-aligned latent box the uniform latents were drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Mirrors per latent is `3^E − 1`; beyond this dimension reflection is refused.
pub const MAX_REFLECT_DIM: usize = 6;

impl LatentBox {
    pub fn square(dim: usize, half_width: f64) -> Self {
        LatentBox {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        crate::error::check_dim(dim, self.lower.len(), "latent box lower")?;
        crate::error::check_dim(dim, self.upper.len(), "latent box upper")?;
        if dim > MAX_REFLECT_DIM {
            return Err(Error::InvalidInput(format!("boundary reflection supports at most {MAX_REFLECT_DIM} latent dimensions")));
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidInput("latent box needs lower < upper in every coordinate".into()));
        }
        Ok(())
    }

    /// `z` reflected across every non-empty combination of faces.
    pub fn mirrors(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let dim = z.len();
        let total = 3usize.pow(dim as u32);
        (1..total)
            .map(|code| {
                let mut c = code;
                (0..dim)
                    .map(|j| {
                        let side = c % 3;
                        c /= 3;
                        match side {
                            0 => z[j],
                            1 => 2.0 * self.lower[j] - z[j],
                            _ => 2.0 * self.upper[j] - z[j],
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Correlation between `−ψ(z)` and `log p̂(G(z))`, where `p̂` is a KDE over the
/// generated samples `G(z)` themselves.
///
/// `bandwidth_scale` multiplies the Scott's-rule bandwidth (1 for the rule itself).
/// With `boundary`, latents are also reflected across the faces of the box and
/// their images added as kernel centres, the reflection correction for a density
/// with bounded support. Without it, points near the edge of `G`'s image lose
/// up to half their kernel mass.
pub fn density_scaling_correlation<M: PiecewiseAffine<f64>>(
    net: &M,
    latents: &[Vec<f64>],
    bandwidth_scale: f64,
    boundary: Option<&LatentBox>,
    workers: usize,
) -> Result<Correlation> {
    if latents.len() < 100 {
        return Err(Error::InvalidInput("density_scaling_correlation needs at least 100 latents".into()));
    }
    if let Some(b) = boundary {
        b.validate(net.input_dim())?;
    }
    let per_point: Vec<(Vec<f64>, Option<f64>)> = map_indexed(workers, latents.len(), |i| {
        let z = &latents[i];
        let y = net.forward(z)?.0;
        let psi = match local_scaling(net, z) {
            Ok(s) => Some(s.psi),
            Err(Error::ZeroMap) => None,
            Err(e) => return Err(e),
        };
        Ok((y, psi))
    })?;
    let outputs: Vec<Vec<f64>> = per_point.iter().map(|(y, _)| y.clone()).collect();
    let h = scott_bandwidth(&outputs)? * bandwidth_scale;
    let mut centres = outputs;
    if let Some(b) = boundary {
        let mirrored = map_indexed(workers, latents.len(), |i| {
            b.mirrors(&latents[i]).iter().map(|m| net.forward(m).map(|(y, _)| y)).collect::<Result<Vec<_>>>()
        })?;
        centres.extend(mirrored.into_iter().flatten());
    }
    let kde = KdeEstimate::new(centres, Some(h))?;
    let logs: Vec<Option<(f64, f64)>> = map_indexed(workers, per_point.len(), |i| {
        let (y, psi) = &per_point[i];
        Ok(match psi {
            Some(p) => Some((-p, kde.density(y)?.ln())),
            None => None,
        })
    })?;
    let (neg_psi, log_density): (Vec<f64>, Vec<f64>) = logs.into_iter().flatten().unzip();
    Ok(Correlation {
        spearman: spearman(&neg_psi, &log_density)?,
        pearson: pearson(&neg_psi, &log_density)?,
        n: neg_psi.len(),
        bandwidth: h,
    })
}
