//! Descriptor-based out-of-distribution scoring.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::descriptors::descriptors_at;
use crate::descriptors::ComplexityConfig;
use crate::error::{Error, Result};
use crate::net::PiecewiseAffine;
use crate::parallel::map_indexed;

use super::stats::{auroc, mean, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl ScoreSummary {
    fn of(xs: &[f64]) -> Self {
        ScoreSummary {
            count: xs.len(),
            mean: mean(xs),
            std: std_dev(xs),
        }
    }
}

/// ψ and ν of the decoder at encoded in- and out-of-distribution data.
/// Samples whose descriptors are undefined are dropped and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub schema_version: u32,
    pub in_psi: Vec<f64>,
    pub in_nu: Vec<f64>,
    pub out_psi: Vec<f64>,
    pub out_nu: Vec<f64>,
    /// AUROC with the descriptor as OOD score (higher = more OOD).
    pub auroc_psi: f64,
    pub auroc_nu: f64,
    pub in_psi_summary: ScoreSummary,
    pub in_nu_summary: ScoreSummary,
    pub out_psi_summary: ScoreSummary,
    pub out_nu_summary: ScoreSummary,
    pub skipped: usize,
}

impl OodReport {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Per-sample table `set,index,psi,nu`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "set,index,psi,nu")?;
        for (set, psi, nu) in [("in", &self.in_psi, &self.in_nu), ("out", &self.out_psi, &self.out_nu)] {
            for (i, (p, n)) in psi.iter().zip(nu).enumerate() {
                writeln!(w, "{set},{i},{p:e},{n:e}")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores `in_set` and `out_set` by the decoder's ψ and ν at `encode(x)`.
pub fn ood_report<M, E>(
    decoder: &M,
    encode: E,
    in_set: &[Vec<f64>],
    out_set: &[Vec<f64>],
    cfg: &ComplexityConfig<f64>,
    workers: usize,
) -> Result<OodReport>
where
    M: PiecewiseAffine<f64>,
    E: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    if in_set.is_empty() || out_set.is_empty() {
        return Err(Error::InvalidInput("OOD report needs non-empty in and out sets".into()));
    }
    let score = |set: &[Vec<f64>]| -> Result<Vec<(f64, f64)>> {
        map_indexed(workers, set.len(), |i| {
            let z = encode(&set[i])?;
            let d = descriptors_at(decoder, &z, cfg)?;
            Ok((d.psi, d.nu))
        })
    };
    let (in_psi, in_nu) = finite_pairs(score(in_set)?);
    let (out_psi, out_nu) = finite_pairs(score(out_set)?);
    let skipped = in_set.len() + out_set.len() - in_psi.len() - out_psi.len();
    if in_psi.is_empty() || out_psi.is_empty() {
        return Err(Error::InvalidInput("no sample with defined descriptors in one of the sets".into()));
    }
    Ok(OodReport {
        schema_version: 1,
        auroc_psi: auroc(&in_psi, &out_psi)?,
        auroc_nu: auroc(&in_nu, &out_nu)?,
        in_psi_summary: ScoreSummary::of(&in_psi),
        in_nu_summary: ScoreSummary::of(&in_nu),
        out_psi_summary: ScoreSummary::of(&out_psi),
        out_nu_summary: ScoreSummary::of(&out_nu),
        in_psi,
        in_nu,
        out_psi,
        out_nu,
        skipped,
    })
}

fn finite_pairs(pairs: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    pairs.into_iter().filter(|(p, n)| p.is_finite() && n.is_finite()).unzip()
}
