//! Uniform descriptor level sets and the Vendi diversity score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, Matrix};

/// Uniform bins over the observed range of a descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetBinning {
    pub descriptor: String,
    /// `n_bins + 1` increasing edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    /// Sample indices per bin; non-finite values belong to no bin.
    pub bins: Vec<Vec<usize>>,
}

impl LevelSetBinning {
    pub fn new(descriptor: &str, values: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidInput("level sets need at least two bins".into()));
        }
        let finite = values.iter().copied().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, f64::min);
        let hi = finite.fold(f64::NEG_INFINITY, f64::max);
        let mut bins = vec![Vec::new(); n_bins];
        if lo > hi {
            return Ok(LevelSetBinning {
                descriptor: descriptor.into(),
                edges: vec![f64::NAN; n_bins + 1],
                bins,
            });
        }
        let edges: Vec<f64> = (0..=n_bins)
            .map(|k| if k == n_bins { hi } else { lo + (hi - lo) * k as f64 / n_bins as f64 })
            .collect();
        for (i, &v) in values.iter().enumerate() {
            if let Some(b) = bin_of(&edges, v) {
                bins[b].push(i);
            }
        }
        Ok(LevelSetBinning {
            descriptor: descriptor.into(),
            edges,
            bins,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    /// Bin containing `v` under these edges.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        bin_of(&self.edges, v)
    }
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[n]);
    if !v.is_finite() || v < lo || v > hi {
        return None;
    }
    if hi == lo {
        return Some(0);
    }
    Some((((v - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetRow {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for bins with fewer than two samples.
    pub metric: Option<f64>,
    pub flagged: bool,
}

/// Applies `metric` to the samples of each of `n_bins` uniform level sets of `values`.
pub fn level_set_stats<S, F>(samples: &[S], values: &[f64], n_bins: usize, tag: &str, metric: F) -> Result<Vec<LevelSetRow>>
where
    F: Fn(&[&S]) -> Result<f64>,
{
    if samples.len() != values.len() {
        return Err(Error::InvalidInput("one descriptor value per sample required".into()));
    }
    let binning = LevelSetBinning::new(tag, values, n_bins)?;
    binning
        .bins
        .iter()
        .enumerate()
        .map(|(b, idx)| {
            let members: Vec<&S> = idx.iter().map(|&i| &samples[i]).collect();
            let flagged = members.len() < 2;
            Ok(LevelSetRow {
                bin: b,
                lower: binning.edges[b],
                upper: binning.edges[b + 1],
                count: members.len(),
                metric: if flagged { None } else { Some(metric(&members)?) },
                flagged,
            })
        })
        .collect()
}

/// `exp(−Σ λ log λ)` over the eigenvalues of `K/n`, `K` the cosine-similarity Gram matrix.
///
/// With unit rows `X`, the eigenvalues of `X Xᵀ/n` are `σᵢ(X)²/n`.
pub fn vendi_score(features: &[Vec<f64>]) -> Result<f64> {
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidInput("Vendi score needs at least one feature vector".into()));
    }
    let d = features[0].len();
    let mut data = Vec::with_capacity(n * d);
    for f in features {
        if f.len() != d {
            return Err(Error::InvalidInput("feature vectors differ in length".into()));
        }
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("zero-norm feature vector".into()));
        }
        data.extend(f.iter().map(|v| v / norm));
    }
    let x = Matrix::from_vec(n, d, data)?;
    let entropy: f64 = singular_values(&x)?
        .iter()
        .map(|s| s * s / n as f64)
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.ln())
        .sum();
    Ok(entropy.exp().clamp(1.0, n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_partition_finite_values() {
        let v = [0.0, 0.5, 1.0, f64::NAN, 0.25, 0.99];
        let b = LevelSetBinning::new("psi", &v, 4).unwrap();
        let mut all: Vec<usize> = b.bins.concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 4, 5]);
        assert_eq!(b.bin_of(1.0), Some(3));
        assert_eq!(b.bin_of(0.0), Some(0));
    }

    #[test]
    fn constant_descriptor_fills_one_bin() {
        let b = LevelSetBinning::new("psi", &[2.0; 7], 5).unwrap();
        assert_eq!(b.bins[0].len(), 7);
        assert!(b.bins[1..].iter().all(Vec::is_empty));
    }

    #[test]
    fn stats_flag_small_bins() {
        let samples: Vec<f64> = (0..10).map(f64::from).collect();
        let mut values = samples.clone();
        values[9] = 100.0;
        let rows = level_set_stats(&samples, &values, 3, "x", |m| Ok(m.len() as f64)).unwrap();
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 10);
        assert!(rows[1].flagged && rows[2].flagged && !rows[0].flagged);
        assert_eq!(rows[0].metric, Some(9.0));
    }

    #[test]
    fn vendi_extremes() {
        let same = vec![vec![1.0, 2.0, 3.0]; 6];
        assert!((vendi_score(&same).unwrap() - 1.0).abs() < 1e-6);
        let basis: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| if i == j { 2.0 } else { 0.0 }).collect()).collect();
        assert!((vendi_score(&basis).unwrap() - 5.0).abs() < 1e-6);
        assert!(vendi_score(&[vec![0.0, 0.0]]).is_err());
    }
}
