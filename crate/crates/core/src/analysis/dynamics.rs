//! Trends of descriptor means over training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LogRow;

use super::stats::ols_slope;

/// Fraction of the step range within which a minimum counts as an early dip.
pub const DIP_WINDOW: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub index: usize,
    pub step: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTrend {
    /// Least-squares slopes over the early, middle and late thirds.
    pub slopes: [f64; 3],
    pub dip: Option<Dip>,
    pub first: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub psi: SeriesTrend,
    pub delta: SeriesTrend,
    pub loss: SeriesTrend,
}

/// Thirds are taken over point indices and overlap at their boundaries so
/// that each holds at least two points.
pub fn series_trend(steps: &[f64], values: &[f64]) -> Result<SeriesTrend> {
    let n = values.len();
    if n < 3 || steps.len() != n {
        return Err(Error::InvalidInput("trend needs at least three log points".into()));
    }
    if values.iter().chain(steps).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("trend series contains non-finite values".into()));
    }
    let mut slopes = [0.0; 3];
    for (k, slope) in slopes.iter_mut().enumerate() {
        let a = (k as f64 * (n - 1) as f64 / 3.0).floor() as usize;
        let mut b = ((k + 1) as f64 * (n - 1) as f64 / 3.0).ceil() as usize;
        if b == a {
            b = a + 1;
        }
        *slope = ols_slope(&steps[a..=b], &values[a..=b])?;
    }
    Ok(SeriesTrend {
        slopes,
        dip: find_dip(steps, values),
        first: values[0],
        last: values[n - 1],
    })
}

/// Minimum within the first [`DIP_WINDOW`] of the step range that lies below
/// the starting value and is followed by a recovery above it.
fn find_dip(steps: &[f64], values: &[f64]) -> Option<Dip> {
    let (s0, s1) = (steps[0], steps[steps.len() - 1]);
    let cutoff = s0 + DIP_WINDOW * (s1 - s0);
    let (index, &value) = values
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(i, _)| steps[*i] <= cutoff)
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let recovers = values[index + 1..].iter().any(|&v| v > value);
    (value < values[0] && recovers).then_some(Dip {
        index,
        step: steps[index],
        value,
    })
}

pub fn dynamics_log_summary(logs: &[LogRow]) -> Result<DynamicsSummary> {
    let steps: Vec<f64> = logs.iter().map(|r| r.step as f64).collect();
    let col = |f: fn(&LogRow) -> f64| logs.iter().map(f).collect::<Vec<_>>();
    Ok(DynamicsSummary {
        psi: series_trend(&steps, &col(|r| r.psi_mean))?,
        delta: series_trend(&steps, &col(|r| r.delta_mean))?,
        loss: series_trend(&steps, &col(|r| r.loss))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 10.0).collect()
    }

    #[test]
    fn monotone_series_has_positive_slopes_and_no_dip() {
        let v: Vec<f64> = (0..12).map(|i| (i as f64).sqrt()).collect();
        let t = series_trend(&steps(12), &v).unwrap();
        assert!(t.slopes.iter().all(|&s| s > 0.0));
        assert!(t.dip.is_none());
    }

    #[test]
    fn v_shape_dip_at_vertex() {
        let v = [5.0, 3.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let t = series_trend(&steps(12), &v).unwrap();
        assert_eq!(t.dip.unwrap().index, 2);
        assert!(t.slopes[0] < 0.0 && t.slopes[2] > 0.0);
    }

    #[test]
    fn three_points_suffice() {
        let t = series_trend(&steps(3), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(t.slopes, [0.1, 0.1, 0.1]);
        assert!(series_trend(&steps(2), &[0.0, 1.0]).is_err());
    }
}
