//! Non-parametric tests, multiple-comparison correction, correlation and
//! agreement statistics.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Largest number of non-zero differences for which the signed-rank test is
/// computed exactly.
pub const SIGNED_RANK_EXACT_MAX_N: usize = 25;

/// Largest size of the smaller group for which the rank-sum test is computed
/// exactly (tie-free samples only).
pub const RANK_SUM_EXACT_MAX_N: usize = 8;

/// Limits of agreement are `mean ± LOA_Z * sd`.
pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `W+` (sum of ranks of positive differences) for the signed-rank test,
    /// `U` of the first group for the rank-sum test.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub n_effective: usize,
    pub method: TestMethod,
}

/// 1-based ranks in ascending order, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Sizes of tie groups (only groups larger than one).
fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > 1 {
            out.push(j - i);
        }
        i = j;
    }
    out
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Two-sided p-value from a standard normal deviate.
fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped. With at most [`SIGNED_RANK_EXACT_MAX_N`]
/// remaining differences the null distribution of `W+` is enumerated over all
/// sign patterns (ties handled through their average ranks); otherwise a
/// normal approximation with tie and continuity correction is used. If every
/// difference is zero the p-value is 1.
pub fn signed_rank_test(diffs: &[f64]) -> Result<TestResult> {
    if diffs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            method: TestMethod::Exact,
        });
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    if n <= SIGNED_RANK_EXACT_MAX_N {
        Ok(TestResult {
            statistic: w_plus,
            p_value: signed_rank_exact_p(&ranks, w_plus),
            n_effective: n,
            method: TestMethod::Exact,
        })
    } else {
        Ok(TestResult {
            statistic: w_plus,
            p_value: signed_rank_normal_p(&abs, w_plus),
            n_effective: n,
            method: TestMethod::NormalApproximation,
        })
    }
}

/// Exact two-sided p-value of `W+` given the ranks of the absolute
/// differences, by counting sign patterns.
pub fn signed_rank_exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    // Average ranks are multiples of 1/2, so doubled ranks are integers.
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w2 = (w_plus * 2.0).round() as usize;
    let patterns = (1u64 << ranks.len()) as f64;
    let le: u64 = counts[..=w2].iter().sum();
    let ge: u64 = counts[w2..].iter().sum();
    (2.0 * le.min(ge) as f64 / patterns).min(1.0)
}

/// Normal-approximation two-sided p-value of `W+` with tie and continuity
/// correction.
pub fn signed_rank_normal_p(abs_diffs: &[f64], w_plus: f64) -> f64 {
    let n = abs_diffs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(&tie_sizes(abs_diffs)) / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    two_sided_normal_p(z)
}

/// Wilcoxon rank-sum (Mann-Whitney U) test of two independent samples.
///
/// Exact when the smaller group has at most [`RANK_SUM_EXACT_MAX_N`] values
/// and there are no ties; otherwise a normal approximation with tie and
/// continuity correction.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let ties = tie_sizes(&pooled);

    if na.min(nb) <= RANK_SUM_EXACT_MAX_N && ties.is_empty() {
        return Ok(TestResult {
            statistic: u_a,
            p_value: rank_sum_exact_p(na, nb, u_a.round() as usize),
            n_effective: na + nb,
            method: TestMethod::Exact,
        });
    }

    let n = (na + nb) as f64;
    let (fa, fb) = (na as f64, nb as f64);
    let mean = fa * fb / 2.0;
    let var = fa * fb / 12.0 * ((n + 1.0) - tie_term(&ties) / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        two_sided_normal_p(((u_a - mean).abs() - 0.5).max(0.0) / var.sqrt())
    };
    Ok(TestResult {
        statistic: u_a,
        p_value: p,
        n_effective: na + nb,
        method: TestMethod::NormalApproximation,
    })
}

/// Null distribution of U for group sizes `m`, `n`: coefficients of the
/// Gaussian binomial `[m+n choose m]_q`.
fn rank_sum_counts(m: usize, n: usize) -> Vec<i128> {
    let (small, large) = if m <= n { (m, n) } else { (n, m) };
    let mut poly = vec![1i128];
    for i in 1..=small {
        // multiply by (1 - q^(large+i))
        let shift = large + i;
        let mut next = vec![0i128; poly.len() + shift];
        for (k, &c) in poly.iter().enumerate() {
            next[k] += c;
            next[k + shift] -= c;
        }
        // divide by (1 - q^i)
        for k in i..next.len() {
            next[k] += next[k - i];
        }
        next.truncate(small * large + 1);
        poly = next;
    }
    poly
}

fn rank_sum_exact_p(m: usize, n: usize, u: usize) -> f64 {
    let counts = rank_sum_counts(m, n);
    let total: i128 = counts.iter().sum();
    let le: i128 = counts[..=u.min(counts.len() - 1)].iter().sum();
    let ge: i128 = counts[u.min(counts.len() - 1)..].iter().sum();
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjusted {
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

/// Benjamini-Hochberg step-up adjustment. Rejections are the hypotheses with
/// adjusted p-value at or below `alpha`.
pub fn benjamini_hochberg(p: &[f64], alpha: f64) -> Result<Adjusted> {
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRangeP(bad));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &idx) in order.iter().enumerate().rev() {
        let rank = (pos + 1) as f64;
        running = running.min(p[idx] * m as f64 / rank);
        adjusted[idx] = running.min(1.0);
    }
    let reject = adjusted.iter().map(|&q| q <= alpha).collect();
    Ok(Adjusted { adjusted, reject })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Percentile (`q` in 0..=100) of sorted values by linear interpolation
/// between closest ranks.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

/// Bland-Altman agreement of `reference - predicted`.
pub fn bland_altman(reference: &[f64], predicted: &[f64]) -> Result<BlandAltman> {
    if reference.len() != predicted.len() {
        return Err(Error::LengthMismatch(reference.len(), predicted.len()));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut diffs: Vec<f64> = reference.iter().zip(predicted).map(|(r, p)| r - p).collect();
    let mean_diff = mean(&diffs);
    let sd_diff = sample_sd(&diffs);
    diffs.sort_by(f64::total_cmp);
    Ok(BlandAltman {
        n: diffs.len(),
        mean_diff,
        sd_diff,
        loa_low: mean_diff - LOA_Z * sd_diff,
        loa_high: mean_diff + LOA_Z * sd_diff,
        p5: percentile_sorted(&diffs, 5.0),
        p50: percentile_sorted(&diffs, 50.0),
        p95: percentile_sorted(&diffs, 95.0),
    })
}

/// Median, interquartile range and tail percentiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
    pub p5: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q25 = percentile_sorted(&s, 25.0);
        let q75 = percentile_sorted(&s, 75.0);
        Some(Summary {
            n: s.len(),
            mean: mean(&s),
            median: percentile_sorted(&s, 50.0),
            q25,
            q75,
            iqr: q75 - q25,
            p5: percentile_sorted(&s, 5.0),
            p95: percentile_sorted(&s, 95.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn signed_rank_six_positive() {
        let r = signed_rank_test(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.p_value, 0.03125);
        assert_eq!(r.statistic, 21.0);
        assert_eq!(r.method, TestMethod::Exact);
    }

    #[test]
    fn signed_rank_all_zero() {
        let r = signed_rank_test(&[0.0; 5]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n_effective, 0);
        assert!(matches!(signed_rank_test(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn signed_rank_nine_positive() {
        let d: Vec<f64> = (1..=9).map(|v| v as f64 * 0.1).collect();
        assert_eq!(signed_rank_test(&d).unwrap().p_value, 2.0 / 512.0);
    }

    #[test]
    fn signed_rank_large_uses_normal() {
        let d: Vec<f64> = (1..=30).map(|v| if v % 3 == 0 { -(v as f64) } else { v as f64 }).collect();
        let r = signed_rank_test(&d).unwrap();
        assert_eq!(r.method, TestMethod::NormalApproximation);
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn rank_sum_exact_separated() {
        let r = rank_sum_test(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.method, TestMethod::Exact);
        assert!((r.p_value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rank_sum_counts_are_gaussian_binomials() {
        // [4 choose 2]_q = 1 + q + 2q^2 + q^3 + q^4
        assert_eq!(rank_sum_counts(2, 2), vec![1, 1, 2, 1, 1]);
        let c = rank_sum_counts(3, 3);
        assert_eq!(c.iter().sum::<i128>(), 20);
        let c = rank_sum_counts(8, 200);
        assert_eq!(c.len(), 1601);
        assert!(c.iter().all(|&v| v > 0));
    }

    #[test]
    fn rank_sum_identical_groups() {
        let a: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let r = rank_sum_test(&a, &a).unwrap();
        assert!(r.p_value > 0.9);
        let r = rank_sum_test(&[5.0; 4], &[5.0; 6]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn bh_cases() {
        let r = benjamini_hochberg(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
        assert_eq!(r.reject, vec![true; 4]);
        for (a, b) in r.adjusted.iter().zip([0.04; 4]) {
            assert!((a - b).abs() < 1e-15);
        }
        let r = benjamini_hochberg(&[0.3], 0.05).unwrap();
        assert_eq!(r.adjusted, vec![0.3]);
        let r = benjamini_hochberg(&[1.0, 1.0], 0.05).unwrap();
        assert_eq!(r.adjusted, vec![1.0, 1.0]);
        assert_eq!(r.reject, vec![false, false]);
        assert!(matches!(benjamini_hochberg(&[1.2], 0.05), Err(Error::OutOfRangeP(_))));
        assert!(benjamini_hochberg(&[f64::NAN], 0.05).is_err());
    }

    #[test]
    fn bh_step_up_keeps_order() {
        let p = [0.04, 0.001, 0.9, 0.03];
        let r = benjamini_hochberg(&p, 0.05).unwrap();
        // sorted: 0.001, 0.03, 0.04, 0.9 -> 0.004, 0.06, 0.0533.., 0.9 -> min from the right
        let expected = [0.16 / 3.0, 0.004, 0.9, 0.16 / 3.0];
        for (a, b) in r.adjusted.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(r.reject, vec![false, true, false, false]);
    }

    #[test]
    fn pearson_cases() {
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson_r(&x, &[1.0; 10]), Err(Error::ConstantInput)));
        assert!(pearson_r(&[1.0], &[2.0]).is_err());
        assert!(pearson_r(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn bland_altman_cases() {
        let r = bland_altman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mean_diff, r.sd_diff, r.loa_low, r.loa_high), (0.0, 0.0, 0.0, 0.0));
        let r = bland_altman(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.mean_diff, 0.0);
        assert!((r.sd_diff - 2f64.sqrt()).abs() < 1e-15);
        assert!((r.loa_high - 1.96 * 2f64.sqrt()).abs() < 1e-12);
        assert!((r.loa_high - 2.772).abs() < 1e-3);
        let r = bland_altman(&[5.0, 1.0, 9.0], &[0.0; 3]).unwrap();
        assert_eq!(r.p50, 5.0);
    }

    #[test]
    fn percentile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&s, 25.0), 2.0);
        assert_eq!(percentile_sorted(&s, 5.0), 1.2);
        let sm = Summary::of(&[7.0]).unwrap();
        assert_eq!(sm.iqr, 0.0);
        assert!(Summary::of(&[]).is_none());
    }
}
