//! Counter-based relabeling streams and the Monte Carlo engine.
//!
//! Permutation `b` of a test draws from its own ChaCha stream, selected by
//! the counter `b` under a key derived from the master seed and the test's
//! identity. Any split of the `b` range across workers therefore yields the
//! same relabelings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{mean_difference, TieThreshold};
use crate::kernel;

const BATCH: usize = 128;

/// Identity of one test within a run, e.g. `["dia", expression, attribute,
/// reference, group]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamId(Vec<u8>);

impl StreamId {
    pub fn new<I, S>(parts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut bytes = Vec::new();
        for p in parts {
            let p = p.as_ref().as_bytes();
            bytes.extend_from_slice(&(p.len() as u64).to_le_bytes());
            bytes.extend_from_slice(p);
        }
        StreamId(bytes)
    }
}

/// 256-bit generator key for one test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn derive(seed: u64, id: &StreamId) -> Self {
        let mut h = Sha256::new();
        h.update(b"febias-permutation-v1");
        h.update(seed.to_le_bytes());
        h.update(&id.0);
        StreamKey(h.finalize().into())
    }

    /// Generator for permutation number `b`.
    pub fn rng(&self, b: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(b);
        rng
    }
}

/// Move a uniformly random `m`-subset of `slice` into its first `m` slots
/// (partial Fisher-Yates). Swap partners are appended to `swaps` so the
/// caller can undo the shuffle.
fn partial_shuffle<T>(slice: &mut [T], m: usize, rng: &mut ChaCha8Rng, swaps: &mut Vec<usize>) {
    let n = slice.len() as u64;
    for i in 0..m {
        let j = rng.random_range(i as u64..n) as usize;
        slice.swap(i, j);
        swaps.push(j);
    }
}

fn undo_shuffle<T>(slice: &mut [T], swaps: &[usize]) {
    for (i, &j) in swaps.iter().enumerate().rev() {
        slice.swap(i, j);
    }
}

/// Pooled indices (`0..n1` are group a, `n1..` group b) that relabeling `b`
/// assigns to group a.
pub fn relabeling(key: &StreamKey, b: u64, n1: usize, n2: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n1 + n2).collect();
    let mut rng = key.rng(b);
    let mut swaps = Vec::new();
    if n1 <= n2 {
        partial_shuffle(&mut idx, n1, &mut rng, &mut swaps);
        idx.truncate(n1);
    } else {
        partial_shuffle(&mut idx, n2, &mut rng, &mut swaps);
        idx.drain(..n2);
    }
    idx
}

/// Drives the relabelings of one test over a pooled sample.
struct Engine<'a> {
    pooled: &'a [f64],
    n1: usize,
    n2: usize,
    total: f64,
    key: StreamKey,
}

impl Engine<'_> {
    fn selected(&self) -> usize {
        self.n1.min(self.n2)
    }

    /// Mean differences for permutations `range`, reusing `work` and `swaps`.
    fn run(&self, range: std::ops::Range<u64>, mut visit: impl FnMut(f64)) {
        let m = self.selected();
        let mut work = self.pooled.to_vec();
        let mut swaps = Vec::with_capacity(m);
        for b in range {
            let mut rng = self.key.rng(b);
            swaps.clear();
            partial_shuffle(&mut work, m, &mut rng, &mut swaps);
            let picked: f64 = work[..m].iter().sum();
            undo_shuffle(&mut work, &swaps);
            let sum_a = if self.n1 <= self.n2 {
                picked
            } else {
                self.total - picked
            };
            visit(mean_difference(sum_a, self.total, self.n1, self.n2));
        }
    }

    fn batches(b_count: u64) -> Vec<std::ops::Range<u64>> {
        (0..b_count)
            .step_by(BATCH)
            .map(|s| s..(s + BATCH as u64).min(b_count))
            .collect()
    }
}

fn engine<'a>(pooled: &'a [f64], n1: usize, key: StreamKey) -> Engine<'a> {
    Engine {
        pooled,
        n1,
        n2: pooled.len() - n1,
        total: kernel::pairwise_sum(pooled),
        key,
    }
}

/// Number of the `b_count` random relabelings whose statistic reaches the
/// threshold.
pub(crate) fn monte_carlo_count(
    pooled: &[f64],
    n1: usize,
    threshold: &TieThreshold,
    key: StreamKey,
    b_count: u64,
) -> u64 {
    let eng = engine(pooled, n1, key);
    Engine::batches(b_count)
        .into_par_iter()
        .map(|range| {
            let mut hits = 0u64;
            eng.run(range, |stat| hits += u64::from(threshold.reached(stat)));
            hits
        })
        .sum()
}

/// Statistic of every relabeling `0..b_count`, in order. The statistic is
/// `mean(a) - mean(b)` over the relabeled groups.
pub fn permuted_statistics(
    values_a: &[f64],
    values_b: &[f64],
    key: StreamKey,
    b_count: u64,
) -> Vec<f64> {
    let pooled: Vec<f64> = values_a.iter().chain(values_b).copied().collect();
    let eng = engine(&pooled, values_a.len(), key);
    Engine::batches(b_count)
        .into_par_iter()
        .flat_map_iter(|range| {
            let mut out = Vec::with_capacity((range.end - range.start) as usize);
            eng.run(range, |s| out.push(s));
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_ids_are_unambiguous() {
        assert_ne!(StreamId::new(["ab", "c"]), StreamId::new(["a", "bc"]));
        let k1 = StreamKey::derive(7, &StreamId::new(["x"]));
        let k2 = StreamKey::derive(8, &StreamId::new(["x"]));
        assert_ne!(k1, k2);
    }

    #[test]
    fn relabeling_preserves_sizes() {
        let key = StreamKey::derive(1, &StreamId::new(["t"]));
        for (n1, n2) in [(3, 5), (5, 3), (1, 1), (4, 4)] {
            for b in 0..20 {
                let mut a = relabeling(&key, b, n1, n2);
                assert_eq!(a.len(), n1);
                a.sort();
                a.dedup();
                assert_eq!(a.len(), n1);
                assert!(a.iter().all(|&i| i < n1 + n2));
            }
        }
    }

    #[test]
    fn statistics_agree_with_relabeling() {
        let a = [0.3, 1.2, -0.4, 2.0];
        let b = [0.5, 0.1, 0.9];
        let key = StreamKey::derive(3, &StreamId::new(["check"]));
        let stats = permuted_statistics(&a, &b, key, 300);
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        for (bi, s) in stats.iter().enumerate() {
            let ga = relabeling(&key, bi as u64, a.len(), b.len());
            let sa: f64 = ga.iter().map(|&i| pooled[i]).sum();
            let sb: f64 = pooled.iter().sum::<f64>() - sa;
            let direct = sa / a.len() as f64 - sb / b.len() as f64;
            assert!((s - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_draws_do_not_depend_on_thread_count() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..55).map(|i| (i as f64 * 0.11).cos()).collect();
        let key = StreamKey::derive(11, &StreamId::new(["threads"]));
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| permuted_statistics(&a, &b, key, 1000));
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(6)
            .build()
            .unwrap()
            .install(|| permuted_statistics(&a, &b, key, 1000));
        assert_eq!(
            one.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            many.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
