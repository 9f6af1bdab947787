//! One-sided Wilcoxon signed-rank test for paired differences.
//!
//! Zero differences are dropped, tied magnitudes share their average rank and
//! `W` is the rank sum of the positive differences. The p-value is
//! `P(W >= w_observed)` under the null: exact (via a count table over rank
//! sums) when at most [`EXACT_LIMIT`] nonzero differences remain, otherwise a
//! normal approximation with continuity correction and tie-corrected variance.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest effective sample size handled by the exact distribution.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Number of nonzero differences.
    pub n_effective: usize,
    /// Sum of the ranks of positive differences.
    pub w_statistic: f64,
    /// One-sided p-value for "differences tend to be positive".
    pub p_value: f64,
    pub exact: bool,
}

/// Doubled average ranks (always integers) of `magnitudes`, in input order,
/// plus the sizes of each tie group.
pub(crate) fn doubled_ranks(magnitudes: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..magnitudes.len()).collect();
    order.sort_by(|&a, &b| magnitudes[a].total_cmp(&magnitudes[b]));
    let mut ranks = vec![0u64; magnitudes.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && magnitudes[order[end]] == magnitudes[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share (start + 1 + end) / 2
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.is_empty() {
        return Err(Error::Argument("Wilcoxon test needs at least one difference".into()));
    }
    if let Some(d) = diffs.iter().find(|d| !d.is_finite()) {
        return Err(Error::Argument(format!("non-finite difference {d}")));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(WilcoxonResult { n_effective: 0, w_statistic: 0.0, p_value: 1.0, exact: true });
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_ranks(&magnitudes);
    let w2: u64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w = w2 as f64 / 2.0;

    if n <= EXACT_LIMIT {
        // counts[s] = number of sign assignments whose doubled positive rank sum is s
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let upper: u64 = counts[w2 as usize..].iter().sum();
        return Ok(WilcoxonResult {
            n_effective: n,
            w_statistic: w,
            p_value: upper as f64 / (1u64 << n) as f64,
            exact: true,
        });
    }

    Ok(WilcoxonResult { n_effective: n, w_statistic: w, p_value: normal_upper_tail(n, w, &ties), exact: false })
}

/// `P(W >= w)` from the continuity-corrected normal approximation.
fn normal_upper_tail(n: usize, w: f64, ties: &[usize]) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = (w - mean - 0.5) / var.sqrt();
    (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(f64::MIN_POSITIVE, 1.0)
}
