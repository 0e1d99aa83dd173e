//! Two-sided Wilcoxon signed-rank test for paired per-frame scores.
//!
//! Zero differences are dropped and ties receive average ranks. For up to
//! 25 effective pairs the p-value is exact, computed from the signed-rank
//! distribution by dynamic programming over doubled ranks (average ranks are
//! half-integers, so doubling makes them integers). Larger samples use the
//! normal approximation with Var(W) = sum(r_i^2)/4, which equals the
//! textbook tie-corrected variance.

const EXACT_LIMIT: usize = 25;

#[derive(Clone, Copy, Debug)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Pairs remaining after dropping zero differences.
    pub n_effective: usize,
    /// Sum of ranks of positive differences.
    pub statistic: f64,
    pub exact: bool,
}

/// Standard normal CDF via an Abramowitz–Stegun erfc approximation
/// (absolute error below 1.5e-7; only the asymptotic branch uses it).
fn phi(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.2316419 * x.abs());
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let tail = (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * poly;
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Average ranks of |d|, ties averaged.
fn average_ranks(diffs: &[f64]) -> Vec<f64> {
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> WilcoxonResult {
    assert_eq!(a.len(), b.len(), "paired score lists must have equal length");
    assert!(a.len() >= 6, "need at least 6 paired frames");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult { p_value: 1.0, n_effective: 0, statistic: 0.0, exact: true };
    }
    let ranks = average_ranks(&diffs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_LIMIT {
        // Doubled ranks are integers even with ties.
        let r2: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let total: u64 = r2.iter().sum();
        // dist[s] = number of sign assignments with doubled statistic s.
        let mut dist = vec![0u64; total as usize + 1];
        dist[0] = 1;
        for &r in &r2 {
            for s in (r as usize..dist.len()).rev() {
                dist[s] += dist[s - r as usize];
            }
        }
        // Two-sided: as extreme in deviation from the mean. Work with
        // 2*s - total (an integer) to avoid halves.
        let dev_obs = ((2.0 * (2.0 * w_plus) - total as f64).abs()).round() as i64;
        let mut count = 0u64;
        for (s, &c) in dist.iter().enumerate() {
            let dev = (2 * s as i64 - total as i64).abs();
            if dev >= dev_obs {
                count += c;
            }
        }
        let p = count as f64 / 2f64.powi(n as i32);
        WilcoxonResult { p_value: p.min(1.0), n_effective: n, statistic: w_plus, exact: true }
    } else {
        let mu: f64 = ranks.iter().sum::<f64>() / 2.0;
        let var: f64 = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
        let z = (w_plus - mu) / var.sqrt();
        let p = 2.0 * phi(-z.abs());
        WilcoxonResult { p_value: p.min(1.0), n_effective: n, statistic: w_plus, exact: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::wilcoxon_exact_p;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_lists_give_p_one() {
        let a = vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let r = wilcoxon_signed_rank(&a, &a);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n_effective, 0);
    }

    #[test]
    fn strict_dominance_on_twenty_frames_is_significant() {
        let a: Vec<f64> = (0..20).map(|i| 0.6 + 0.002 * (i as f64 + 1.0)).collect();
        let b = vec![0.6; 20];
        let r = wilcoxon_signed_rank(&a, &b);
        assert!(r.p_value < 0.001, "p = {}", r.p_value);
        assert!(r.exact);
    }

    #[test]
    fn matches_exact_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for case in 0..40 {
            let n = rng.gen_range(6..=10);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..n)
                .map(|i| {
                    if rng.gen_bool(0.2) {
                        a[i] // force zero differences sometimes
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect();
            let ours = wilcoxon_signed_rank(&a, &b);
            let oracle = wilcoxon_exact_p(&a, &b);
            assert!(
                (ours.p_value - oracle).abs() < 1e-6,
                "case {case}: {} vs oracle {oracle}",
                ours.p_value
            );
        }
    }

    #[test]
    fn ties_get_average_ranks_and_stay_exact() {
        // Duplicated |differences| exercise the tie path.
        let a = vec![1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 0.5, 0.5];
        let b = vec![0.0; 8];
        let ours = wilcoxon_signed_rank(&a, &b);
        let oracle = wilcoxon_exact_p(&a, &b);
        assert!((ours.p_value - oracle).abs() < 1e-9);
    }

    #[test]
    fn large_sample_uses_normal_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r = wilcoxon_signed_rank(&a, &b);
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn normal_phi_is_accurate() {
        assert!((phi(0.0) - 0.5).abs() < 1e-9);
        assert!((phi(1.96) - 0.975).abs() < 2e-4);
        assert!((phi(-1.0) - 0.158655).abs() < 2e-6);
    }
}
