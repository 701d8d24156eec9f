//! Two-sample significance tests with Bonferroni correction.
//!
//! [`compare`] gates between Welch's t-test and the Mann-Whitney U test: the
//! t-test is used when both samples have at most 50 values and pass a
//! Shapiro-Wilk check at 0.05, the U test otherwise. All tests are two-sided.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Significance level of the Shapiro-Wilk gate.
pub const NORMALITY_ALPHA: f64 = 0.05;
/// Largest sample for which the t-test may be chosen.
pub const MAX_T_TEST_N: usize = 50;
/// Largest `|a|·|b|` for which Mann-Whitney p-values are enumerated exactly.
pub const MAX_EXACT_PRODUCT: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("each sample needs at least {min} values, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("number of comparisons must be at least 1")]
    InvalidComparisons,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    TTest,
    MannWhitneyU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_used: TestKind,
    /// Welch t, or U of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub corrected_alpha: f64,
    pub significant: bool,
    pub n_comparisons: usize,
    /// Welch-Satterthwaite degrees of freedom; absent for the U test.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyResult {
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Welch's unequal-variance t-test. Needs at least two values per sample.
pub fn welch(a: &[f64], b: &[f64]) -> WelchResult {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let (t, p_value) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return WelchResult {
            t,
            df: na + nb - 2.0,
            p_value,
        };
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    WelchResult { t, df, p_value }
}

/// Midranks of the pooled sample, doubled so they stay integral.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, doubled midrank = start + 1 + end
        let r = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Mann-Whitney U test. Exact enumeration over rank subsets (ties kept as
/// midranks) when `|a|·|b| ≤ 400`, otherwise the normal approximation with
/// tie correction and continuity correction 0.5.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> MannWhitneyResult {
    if a.len() * b.len() <= MAX_EXACT_PRODUCT {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_asymptotic(a, b)
    }
}

fn u_statistic(a: &[f64], b: &[f64]) -> (f64, Vec<u64>, Vec<usize>) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let na = a.len() as u64;
    let r2: u64 = ranks[..a.len()].iter().sum();
    let u2 = r2 as i64 - (na * (na + 1)) as i64;
    (u2 as f64 / 2.0, ranks, ties)
}

pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> MannWhitneyResult {
    let (u, ranks, _) = u_statistic(a, b);
    let (na, nb) = (a.len(), b.len());
    let max_sum: usize = ranks.iter().map(|&r| r as usize).sum();
    // ways[j][s]: number of j-subsets of the pooled ranks with doubled-rank sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; na + 1];
    ways[0][0] = 1.0;
    for &r in &ranks {
        let r = r as usize;
        for j in (1..=na).rev() {
            let (lo, hi) = ways.split_at_mut(j);
            let prev = &lo[j - 1];
            let cur = &mut hi[0];
            for s in (r..=max_sum).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    let total: f64 = ways[na].iter().sum();
    // a doubled rank sum s gives 2U = s - na(na+1)
    let offset = (na * (na + 1)) as i64;
    let center = (na * nb) as i64;
    let observed = ((2.0 * u) as i64 - center).abs();
    let extreme: f64 = ways[na]
        .iter()
        .enumerate()
        .filter(|(s, w)| **w != 0.0 && (*s as i64 - offset - center).abs() >= observed)
        .map(|(_, w)| w)
        .sum();
    MannWhitneyResult {
        u,
        p_value: (extreme / total).min(1.0),
        exact: true,
    }
}

pub fn mann_whitney_asymptotic(a: &[f64], b: &[f64]) -> MannWhitneyResult {
    let (u, _, ties) = u_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * standard_normal().sf(z)).min(1.0)
    };
    MannWhitneyResult {
        u,
        p_value,
        exact: false,
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro-Wilk W and p-value (Royston's approximation), for `3 ≤ n ≤ 5000`.
/// Returns `None` for fewer than three values or a sample with zero range.
pub fn shapiro_wilk(x: &[f64]) -> Option<(f64, f64)> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];

    let n = x.len();
    if n < 3 {
        return None;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[n - 1] - sorted[0] <= 0.0 {
        return None;
    }
    let half = n / 2;
    let an = n as f64;
    let norm = standard_normal();

    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = 0.5f64.sqrt();
    } else {
        let m: Vec<f64> = (1..=half)
            .map(|i| norm.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mean = sorted.iter().sum::<f64>() / an;
    let ss: f64 = sorted.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (0..half)
        .map(|i| a[i] * (sorted[n - 1 - i] - sorted[i]))
        .sum();
    let w = (num * num / ss).min(1.0);

    let p = if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::FRAC_PI_3);
        p.clamp(0.0, 1.0)
    } else {
        let mut y = (1.0 - w).ln();
        let (m, s) = if n <= 11 {
            let gamma = poly(&G, an);
            if y >= gamma {
                return Some((w, 1e-99));
            }
            y = -(gamma - y).ln();
            (poly(&C3, an), poly(&C4, an).exp())
        } else {
            let xx = an.ln();
            (poly(&C5, xx), poly(&C6, xx).exp())
        };
        Normal::new(m, s).expect("positive scale").sf(y)
    };
    Some((w, p))
}

fn passes_normality(x: &[f64]) -> bool {
    x.len() <= MAX_T_TEST_N && matches!(shapiro_wilk(x), Some((_, p)) if p >= NORMALITY_ALPHA)
}

/// Compares two samples and applies a Bonferroni correction for
/// `n_comparisons` simultaneous tests.
pub fn compare(
    a: &[f64],
    b: &[f64],
    alpha: f64,
    n_comparisons: usize,
) -> Result<TestResult, StatsError> {
    let smallest = a.len().min(b.len());
    if smallest < 3 {
        return Err(StatsError::TooFewSamples {
            min: 3,
            got: smallest,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    if n_comparisons == 0 {
        return Err(StatsError::InvalidComparisons);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let corrected_alpha = alpha / n_comparisons as f64;
    let (test_used, statistic, p_value, df) = if passes_normality(a) && passes_normality(b) {
        let r = welch(a, b);
        (TestKind::TTest, r.t, r.p_value, Some(r.df))
    } else {
        let r = mann_whitney(a, b);
        (TestKind::MannWhitneyU, r.u, r.p_value, None)
    };
    Ok(TestResult {
        test_used,
        statistic,
        p_value,
        corrected_alpha,
        significant: p_value < corrected_alpha,
        n_comparisons,
        df,
    })
}
