//! Exact permutation distributions for small two-sample problems.

use super::{mean_difference, TieThreshold};

/// `C(n, k)` if it does not exceed `cap`, otherwise `None`.
pub fn binomial_capped(n: u64, k: u64, cap: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) since acc = C(n, i)
        acc = acc.checked_mul(u128::from(n - i))? / u128::from(i + 1);
        if acc > cap {
            return None;
        }
    }
    Some(acc)
}

pub fn binomial(n: u64, k: u64) -> Option<u128> {
    binomial_capped(n, k, u128::MAX)
}

/// Count the size-`n1` subsets of `pooled` (the first group in a relabeling)
/// whose mean difference reaches the threshold. Depth-first with a running
/// sum; visits every one of the `C(N, n1)` assignments.
pub fn enumerate_count(pooled: &[f64], n1: usize, total: f64, threshold: &TieThreshold) -> u128 {
    let n2 = pooled.len() - n1;
    let mut count = 0u128;
    walk(pooled, 0, n1, 0.0, &mut |sum_a| {
        if threshold.reached(mean_difference(sum_a, total, n1, n2)) {
            count += 1;
        }
    });
    count
}

fn walk(pooled: &[f64], start: usize, remaining: usize, sum: f64, leaf: &mut impl FnMut(f64)) {
    if remaining == 0 {
        leaf(sum);
        return;
    }
    let last = pooled.len() - remaining;
    for i in start..=last {
        walk(pooled, i + 1, remaining - 1, sum + pooled[i], leaf);
    }
}

/// Tail count for 0/1 values: the first-group sum under relabeling is the
/// number of ones it receives, which is hypergeometric. Returns the number
/// of assignments reaching the threshold, as an integer.
pub fn hypergeometric_count(
    n1: usize,
    n2: usize,
    ones: usize,
    threshold: &TieThreshold,
) -> Option<u128> {
    let big_n = n1 + n2;
    let zeros = big_n - ones;
    let total = ones as f64;
    let lo = n1.saturating_sub(zeros);
    let hi = ones.min(n1);
    let mut count = 0u128;
    for k in lo..=hi {
        if threshold.reached(mean_difference(k as f64, total, n1, n2)) {
            let ways = binomial(ones as u64, k as u64)?
                .checked_mul(binomial(zeros as u64, (n1 - k) as u64)?)?;
            count = count.checked_add(ways)?;
        }
    }
    Some(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), Some(20));
        assert_eq!(binomial(8, 4), Some(70));
        assert_eq!(binomial(5, 7), Some(0));
        assert_eq!(binomial(60, 30), Some(118_264_581_564_861_424));
        assert_eq!(binomial_capped(20, 10, 100_000), None);
        assert_eq!(binomial_capped(20, 10, 184_756), Some(184_756));
    }

    #[test]
    fn enumeration_visits_every_assignment() {
        let pooled = [0.1, 0.7, 0.3, 0.9, 0.2];
        let always = TieThreshold::new(f64::NEG_INFINITY, &pooled);
        assert_eq!(enumerate_count(&pooled, 2, pooled.iter().sum(), &always), 10);
    }
}
