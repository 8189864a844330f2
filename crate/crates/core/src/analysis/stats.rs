//! Rank statistics: midranks, correlations, AUROC and the rank-sum test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// 1-based ranks with ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs two equal-length series of length ≥ 2".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput("correlation of a constant series is undefined".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlation of the midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&midranks(x), &midranks(y))
}

/// Probability that a random `positive` score exceeds a random `negative`
/// one, ties counting one half (Mann–Whitney U / (n₊ n₋)).
///
/// All-identical scores give 0.5 with a logged warning.
pub fn auroc(negative: &[f64], positive: &[f64]) -> Result<f64> {
    if negative.is_empty() || positive.is_empty() {
        return Err(Error::InvalidInput("AUROC needs both score sets non-empty".into()));
    }
    let all: Vec<f64> = negative.iter().chain(positive).copied().collect();
    if all.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("AUROC scores contain NaN".into()));
    }
    if all.iter().all(|&v| v == all[0]) {
        log::warn!("AUROC undefined: all scores identical; returning 0.5");
        return Ok(0.5);
    }
    Ok(mann_whitney_u(negative, positive) / (negative.len() * positive.len()) as f64)
}

/// U statistic of `b` against `a`: number of pairs with `b > a`, ties counting one half.
fn mann_whitney_u(a: &[f64], b: &[f64]) -> f64 {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&all);
    let rb: f64 = ranks[a.len()..].iter().sum();
    let nb = b.len() as f64;
    rb - nb * (nb + 1.0) / 2.0
}

/// Wilcoxon rank-sum test, normal approximation with tie correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// U statistic of the second sample against the first.
    pub u: f64,
    pub z: f64,
    /// One-sided p-value for "second sample is stochastically greater".
    pub p_greater: f64,
    /// One-sided p-value for "second sample is stochastically smaller".
    pub p_less: f64,
    pub p_two_sided: f64,
}

pub fn rank_sum(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("rank-sum test needs both samples non-empty".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("rank-sum samples contain NaN".into()));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let u = mann_whitney_u(a, b);
    let n = n1 + n2;
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let std_normal = Normal::standard();
    let z = if var > 0.0 { (u - n1 * n2 / 2.0) / var.sqrt() } else { 0.0 };
    let p_greater = std_normal.sf(z);
    let p_less = std_normal.cdf(z);
    Ok(RankSum {
        u,
        z,
        p_greater,
        p_less,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
    })
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("slope needs at least two points".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("slope undefined for constant abscissa".into()));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx)
}
