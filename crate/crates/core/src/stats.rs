//! Wilcoxon matched-pairs signed-rank test and summary statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Largest effective sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSample {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "paired sample lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(Error::Size("paired sample is empty".into()));
        }
        Ok(Self { a, b })
    }

    pub fn differences(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| x - y).collect()
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided.
    pub p_value: f64,
    pub n_effective: usize,
    pub method: WilcoxonMethod,
}

/// Mid-ranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Two-sided signed-rank test. Zero differences are dropped; the exact null
/// distribution is used for up to 25 remaining pairs, a tie- and
/// continuity-corrected normal approximation beyond.
pub fn wilcoxon_signed_rank(sample: &PairedSample) -> Result<WilcoxonResult> {
    let diffs: Vec<f64> = sample
        .differences()
        .into_iter()
        .filter(|&d| d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let w_minus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d < 0.0)
        .map(|(r, _)| r)
        .sum();
    let statistic = w_plus.min(w_minus);

    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, statistic), WilcoxonMethod::Exact)
    } else {
        (normal_p(&ranks, statistic), WilcoxonMethod::NormalApprox)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        p_value,
        n_effective: n,
        method,
    })
}

/// `min(1, 2 P(T ≤ w))` under the null where each rank carries an independent
/// fair sign. Ranks are half-integers at worst, so the distribution of twice
/// the positive-rank sum is counted over integers.
fn exact_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (2.0 * w).round() as usize;
    let below: f64 = counts[..=limit.min(total)].iter().sum();
    let all = 2f64.powi(ranks.len() as i32);
    (2.0 * below / all).min(1.0)
}

fn normal_p(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = -((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.cdf(z)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (`N − 1` denominator).
    pub sd: f64,
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Size("mean of an empty sample".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::Size(format!(
            "standard deviation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Ok(Summary {
        mean: m,
        sd: (ss / (values.len() as f64 - 1.0)).sqrt(),
    })
}
