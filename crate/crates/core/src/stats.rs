//! Interval estimates and trend tests used by the Monte-Carlo experiments.

use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

/// A binomial proportion with its Wilson 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn wilson(successes: u64, trials: u64) -> Self {
        Self::wilson_z(successes, trials, 1.959_963_984_540_054)
    }

    pub fn wilson_z(successes: u64, trials: u64, z: f64) -> Self {
        if trials == 0 {
            return Self {
                successes,
                trials,
                p: f64::NAN,
                lo: 0.0,
                hi: 1.0,
            };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            successes,
            trials,
            p,
            lo: if successes == 0 {
                0.0
            } else {
                (centre - half).max(0.0)
            },
            hi: if successes >= trials {
                1.0
            } else {
                (centre + half).min(1.0)
            },
        }
    }
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    1.0 - Normal::new(0.0, 1.0).unwrap().cdf(z)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Upper tail of the chi-squared distribution.
pub fn chi2_sf(stat: f64, df: f64) -> f64 {
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// One-sided exact sign test: P(X >= positives) for X ~ Bin(n, 1/2), ties dropped.
pub fn sign_test(positives: u64, negatives: u64) -> f64 {
    let n = positives + negatives;
    if n == 0 || positives == 0 {
        return 1.0;
    }
    1.0 - Binomial::new(0.5, n).unwrap().cdf(positives - 1)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrendTest {
    pub statistic: f64,
    pub z: f64,
    /// One-sided p-value in the tested direction.
    pub p: f64,
}

/// Page's test for an increasing trend across ordered treatments.
///
/// `blocks[b][j]` is the response of block `b` (e.g. one shared seed) under
/// treatment `j`. The null variance is the exact within-block permutation
/// variance, which stays correct when ties occur.
pub fn page_trend(blocks: &[Vec<f64>]) -> TrendTest {
    let (mut l, mut e, mut v) = (0.0, 0.0, 0.0);
    for row in blocks {
        let k = row.len() as f64;
        if row.len() < 2 {
            continue;
        }
        let a = ranks(row);
        let c: Vec<f64> = (1..=row.len()).map(|j| j as f64).collect();
        let (abar, cbar) = (mean(&a), mean(&c));
        l += a.iter().zip(&c).map(|(a, c)| a * c).sum::<f64>();
        e += k * abar * cbar;
        let sa: f64 = a.iter().map(|x| (x - abar).powi(2)).sum();
        let sc: f64 = c.iter().map(|x| (x - cbar).powi(2)).sum();
        v += sa * sc / (k - 1.0);
    }
    let z = if v > 0.0 { (l - e) / v.sqrt() } else { 0.0 };
    TrendTest {
        statistic: l,
        z,
        p: if v > 0.0 { normal_sf(z) } else { 1.0 },
    }
}

/// Cochran-Armitage test for a decreasing trend in proportions.
pub fn cochran_armitage_decreasing(successes: &[u64], trials: &[u64], scores: &[f64]) -> TrendTest {
    let n: f64 = trials.iter().map(|&t| t as f64).sum();
    let pbar = successes.iter().map(|&s| s as f64).sum::<f64>() / n;
    let t: f64 = successes
        .iter()
        .zip(trials)
        .zip(scores)
        .map(|((&x, &m), s)| s * (x as f64 - m as f64 * pbar))
        .sum();
    let sns2: f64 = trials
        .iter()
        .zip(scores)
        .map(|(&m, s)| m as f64 * s * s)
        .sum();
    let sns: f64 = trials.iter().zip(scores).map(|(&m, s)| m as f64 * s).sum();
    let var = pbar * (1.0 - pbar) * (sns2 - sns * sns / n);
    let z = if var > 0.0 { t / var.sqrt() } else { 0.0 };
    TrendTest {
        statistic: t,
        z,
        p: if var > 0.0 { normal_cdf(z) } else { 1.0 },
    }
}
