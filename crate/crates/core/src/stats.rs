//! Paired-outcome significance testing.

/// Exact two-sided McNemar test on discordant pair counts.
///
/// With `n = n01 + n10` and `k = max(n01, n10)`, the p-value is
/// `min(1, 2 * P[Bin(n, 1/2) >= k])`, computed from the exact binomial
/// tail. Returns 1.0 when there are no discordant pairs.
pub fn mcnemar_exact(n01: u64, n10: u64) -> f64 {
    let n = n01 + n10;
    if n == 0 {
        return 1.0;
    }
    let k = n01.max(n10);
    // ln-factorials up to n keep the tail stable for large counts.
    let mut ln_fact = vec![0.0f64; (n + 1) as usize];
    for i in 1..=n as usize {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln2 = std::f64::consts::LN_2;
    let tail: f64 = (k..=n)
        .map(|i| {
            let ln_choose =
                ln_fact[n as usize] - ln_fact[i as usize] - ln_fact[(n - i) as usize];
            (ln_choose - n as f64 * ln2).exp()
        })
        .sum();
    (2.0 * tail).min(1.0)
}
