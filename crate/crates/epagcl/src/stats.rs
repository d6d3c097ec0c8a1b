//! One-sided Wilcoxon signed-rank test (x > y) for paired accuracy samples.
//!
//! Zero differences are dropped, ties receive mid-ranks. Up to 25 effective
//! pairs the p-value comes from the exact conditional distribution of W+
//! (a subset-sum count over the doubled ranks, so mid-ranks stay integral);
//! larger samples fall back to the tie-corrected normal approximation with
//! continuity correction.

use serde::Serialize;

use crate::error::{Error, Result};

const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Serialize)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n_effective: usize,
    pub exact: bool,
}

/// Mid-ranks of |d| (1-based), ties averaged.
fn mid_ranks(abs: &[f64]) -> Vec<f64> {
    let n = abs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs[a].partial_cmp(&abs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // average of 1-based positions i+1..=j+1
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Exact P(W+ >= w_obs) over all 2^n sign assignments, via a subset-sum
/// count on doubled ranks.
fn exact_upper_tail(doubled_ranks: &[u64], doubled_w: u64) -> f64 {
    let n = doubled_ranks.len();
    let max_sum: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; max_sum as usize + 1];
    counts[0] = 1;
    let mut reached = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        reached += r;
        for s in (r..=reached).rev() {
            counts[s] += counts[s - r];
        }
    }
    let favourable: u64 = counts[doubled_w.min(max_sum + 1) as usize..].iter().sum();
    favourable as f64 / (1u64 << n) as f64
}

fn normal_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Abramowitz & Stegun 7.1.26 rational approximation (|error| < 1.5e-7).
fn erfc(x: f64) -> f64 {
    let sign_negative = x < 0.0;
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let val = poly * (-x * x).exp();
    if sign_negative {
        2.0 - val
    } else {
        val
    }
}

/// One-sided test of whether `x` stochastically exceeds `y`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples of length {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 5 {
        return Err(Error::invalid("samples", "need at least 5 pairs"));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        log::warn!("all paired differences are zero; returning p = 1");
        return Ok(WilcoxonResult {
            p_value: 1.0,
            w_plus: 0.0,
            n_effective: 0,
            exact: true,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = mid_ranks(&abs);
    let n = diffs.len();
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= EXACT_LIMIT {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let doubled_w = (2.0 * w_plus).round() as u64;
        Ok(WilcoxonResult {
            p_value: exact_upper_tail(&doubled, doubled_w),
            w_plus,
            n_effective: n,
            exact: true,
        })
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // tie correction: subtract sum(t^3 - t)/48 from the null variance
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w_plus - mean - 0.5) / var.sqrt();
        Ok(WilcoxonResult {
            p_value: normal_upper_tail(z),
            w_plus,
            n_effective: n,
            exact: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    /// Brute-force oracle: enumerate all 2^n sign patterns directly.
    fn enumerated_upper_tail(ranks: &[f64], w_obs: f64) -> f64 {
        let n = ranks.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if w >= w_obs - 1e-12 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn strictly_greater_sample_attains_minimal_p() {
        let x: Vec<f64> = (1..=10).map(|i| i as f64 + 0.5).collect();
        let y: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(r.exact);
        assert_eq!(r.n_effective, 10);
        // all signs positive: W+ = 55, attained by exactly one of 2^10 patterns
        assert!((r.p_value - 1.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&x, &x).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n_effective, 0);
    }

    #[test]
    fn matches_published_critical_values_for_n10() {
        // one-sided alpha = 0.05 at n = 10: reject when W- <= 10,
        // i.e. W+ >= 45; the table equivalently puts the 0.025 cut at 8.
        let ranks: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r) as u64).collect();
        let p_at = |w_plus: f64| exact_upper_tail(&doubled, (2.0 * w_plus) as u64);
        assert!(p_at(45.0) <= 0.05 && p_at(44.0) > 0.05);
        assert!(p_at(47.0) <= 0.025 && p_at(46.0) > 0.025);
    }

    #[test]
    fn dp_matches_enumeration_with_and_without_ties() {
        let mut rng = StreamRng::new(5);
        for case in 0..20 {
            let n = 6 + (case % 5);
            let x: Vec<f64> = (0..n).map(|_| (rng.unit() * 8.0).round() / 2.0).collect();
            let y: Vec<f64> = (0..n).map(|_| (rng.unit() * 8.0).round() / 2.0).collect();
            let diffs: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(a, b)| a - b)
                .filter(|d| *d != 0.0)
                .collect();
            if diffs.len() < 2 {
                continue;
            }
            let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
            let ranks = mid_ranks(&abs);
            let w_plus: f64 = diffs
                .iter()
                .zip(&ranks)
                .filter(|(d, _)| **d > 0.0)
                .map(|(_, r)| r)
                .sum();
            let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
            let fast = exact_upper_tail(&doubled, (2.0 * w_plus).round() as u64);
            let slow = enumerated_upper_tail(&ranks, w_plus);
            assert!((fast - slow).abs() < 1e-12, "case {case}: {fast} vs {slow}");
        }
    }

    #[test]
    fn mid_ranks_average_ties() {
        let ranks = mid_ranks(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn short_and_mismatched_inputs_are_rejected() {
        assert!(wilcoxon_signed_rank(&[1.0; 4], &[0.0; 4]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0; 6], &[0.0; 5]).is_err());
    }

    #[test]
    fn normal_branch_tracks_exact_at_boundary() {
        // same data evaluated at n = 25 (exact) and replicated to n = 26
        // (normal); the approximation should land close by
        let mut rng = StreamRng::new(9);
        let x: Vec<f64> = (0..26).map(|i| i as f64 + rng.unit() * 4.0).collect();
        let y: Vec<f64> = (0..26).map(|i| i as f64 + rng.unit() * 4.0).collect();
        let exact = wilcoxon_signed_rank(&x[..25], &y[..25]).unwrap();
        assert!(exact.exact);
        let approx = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(!approx.exact);
        assert!((exact.p_value - approx.p_value).abs() < 0.08);
    }

    #[test]
    fn repeated_five_runs_protocol_is_exact() {
        // five accuracies repeated five times -> 25 pairs, heavy ties
        let xs = [0.86, 0.85, 0.87, 0.86, 0.88];
        let ys = [0.84, 0.85, 0.85, 0.83, 0.86];
        let x: Vec<f64> = xs.iter().cycle().take(25).copied().collect();
        let y: Vec<f64> = ys.iter().cycle().take(25).copied().collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(r.exact);
        assert!(r.p_value < 0.05, "p = {}", r.p_value);
    }
}
