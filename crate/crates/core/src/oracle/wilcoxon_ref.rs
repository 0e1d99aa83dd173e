//! Exact Wilcoxon signed-rank reference by full sign-flip enumeration.

/// Two-sided exact p-value of the Wilcoxon signed-rank test for paired
/// samples, by enumerating all 2^n sign assignments. Zero differences are
/// dropped, tied |difference| values receive average ranks. Feasible for
/// n <= 22 after dropping zeros; all differences zero yields p = 1.
pub fn wilcoxon_exact_p(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return 1.0;
    }
    assert!(n <= 22, "exact enumeration limited to 22 nonzero differences");
    // Average ranks of |d|.
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
    let w_obs: f64 = (0..n).filter(|&k| diffs[k] > 0.0).map(|k| ranks[k]).sum();
    let mu: f64 = ranks.iter().sum::<f64>() / 2.0;
    let dev = (w_obs - mu).abs();
    let mut count = 0u64;
    for mask in 0u64..(1u64 << n) {
        let mut w = 0.0;
        for (k, r) in ranks.iter().enumerate() {
            if mask >> k & 1 == 1 {
                w += r;
            }
        }
        if (w - mu).abs() >= dev - 1e-12 {
            count += 1;
        }
    }
    count as f64 / (1u64 << n) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_lists_give_p_one() {
        let a = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(wilcoxon_exact_p(&a, &a), 1.0);
    }

    #[test]
    fn one_sided_dominance_small_p() {
        let a: Vec<f64> = (0..20).map(|i| 1.0 + 0.01 * (i as f64 + 1.0)).collect();
        let b = vec![1.0; 20];
        let p = wilcoxon_exact_p(&a, &b);
        // All 20 differences positive: only the all-positive and all-negative
        // assignments are as extreme.
        assert!((p - 2.0 / (1u64 << 20) as f64).abs() < 1e-12);
        assert!(p < 0.001);
    }
}
