//! Permutation tests for observed disparities.
//!
//! An observed value `V` (a differential association or a TPR difference
//! against the reference group) is compared with the values obtained by
//! relabeling members between the reference group and the other group with
//! group sizes kept fixed. The one-sided p-value is the fraction of
//! relabelings whose value is at least `V`; `V` is retained only when
//! `p < alpha`.
//!
//! Small problems are enumerated exactly (hypergeometrically for 0/1
//! values). Larger ones draw `B` relabelings from per-test counter-based
//! streams, so results do not depend on the worker count.

mod exact;
mod resample;
mod suite;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel;

pub use exact::{binomial, binomial_capped, enumerate_count, hypergeometric_count};
pub use resample::{permuted_statistics, relabeling, StreamId, StreamKey};
pub use suite::{
    dia_suite, dip_suite, project_scalars, run_dia_suite, run_dip_suite, DiaSuiteOutput,
    DipSuiteOutput, DroppedStratum, StratumPolicy,
};

/// Relative tolerance used when deciding `permuted >= observed`.
///
/// Permuted sums are accumulated in a different order than the observed
/// value, so exact ties can differ in the last bits.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `(1/B) * #{permuted >= observed}`; can be 0.
    Paper,
    /// `(1 + #{permuted >= observed}) / (1 + B)`.
    PlusOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Random relabelings per test (B).
    pub permutations: u64,
    pub alpha: f64,
    pub seed: u64,
    /// Largest number of distinct assignments enumerated exactly.
    pub exact_threshold: u64,
    pub estimator: Estimator,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            permutations: 10_000,
            alpha: 0.05,
            seed: 0,
            exact_threshold: 100_000,
            estimator: Estimator::Paper,
        }
    }
}

impl PermutationConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::Statistics("permutation count must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Statistics(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub observed: f64,
    pub p: f64,
    pub validated: f64,
    pub method: Method,
    /// Relabelings drawn, or assignments enumerated for exact tests.
    pub b_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Dia,
    Dip,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Dia => "dia",
            Source::Dip => "dip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingEntry {
    pub group: String,
    pub observed: f64,
    pub p: f64,
    pub validated: f64,
    pub method: Method,
    pub b_used: u64,
}

impl FindingEntry {
    pub fn new(group: impl Into<String>, r: TestResult) -> Self {
        Self {
            group: group.into(),
            observed: r.observed,
            p: r.p,
            validated: r.validated,
            method: r.method,
            b_used: r.b_used,
        }
    }
}

/// Tested disparities of one expression against its reference group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFinding {
    pub expression: String,
    pub attribute: String,
    pub reference_group: String,
    pub source: Source,
    pub entries: Vec<FindingEntry>,
}

impl BiasFinding {
    pub fn entry(&self, group: &str) -> Option<&FindingEntry> {
        self.entries.iter().find(|e| e.group == group)
    }

    /// Copy with every validated value recomputed at `alpha`.
    pub fn rethreshold(&self, alpha: f64) -> BiasFinding {
        let mut f = self.clone();
        for e in &mut f.entries {
            e.validated = validate(e.observed, e.p, alpha);
        }
        f
    }
}

/// `observed` if `p < alpha`, else 0.
pub fn validate(observed: f64, p: f64, alpha: f64) -> f64 {
    if p < alpha {
        observed
    } else {
        0.0
    }
}

/// `mean(a) - mean(b)` from the first group's sum and the pooled total.
#[inline]
pub fn mean_difference(sum_a: f64, total: f64, n1: usize, n2: usize) -> f64 {
    sum_a / n1 as f64 - (total - sum_a) / n2 as f64
}

/// The `permuted >= observed` rule with a scale-relative tie tolerance.
#[derive(Debug, Clone, Copy)]
pub struct TieThreshold {
    cut: f64,
}

impl TieThreshold {
    pub fn new(observed: f64, pooled: &[f64]) -> Self {
        let scale = pooled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            cut: observed - TIE_TOLERANCE * scale,
        }
    }

    #[inline]
    pub fn reached(&self, permuted: f64) -> bool {
        permuted >= self.cut
    }
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// One-sided permutation test of `observed = mean(values_a) - mean(values_b)`
/// (the caller may pre-scale the values).
pub fn permutation_test(
    values_a: &[f64],
    values_b: &[f64],
    observed: f64,
    cfg: &PermutationConfig,
    stream_id: &StreamId,
) -> Result<TestResult> {
    cfg.check()?;
    if values_a.is_empty() || values_b.is_empty() {
        return Err(Error::Statistics(format!(
            "permutation test needs two non-empty samples, got sizes {} and {}",
            values_a.len(),
            values_b.len()
        )));
    }
    if !observed.is_finite() || values_a.iter().chain(values_b).any(|v| !v.is_finite()) {
        return Err(Error::Statistics("non-finite value in permutation test".into()));
    }
    let n1 = values_a.len();
    let n2 = values_b.len();
    let pooled: Vec<f64> = values_a.iter().chain(values_b).copied().collect();
    let threshold = TieThreshold::new(observed, &pooled);

    let assignments = binomial_capped(
        (n1 + n2) as u64,
        n1 as u64,
        u128::from(cfg.exact_threshold),
    );
    let (p, method, b_used) = match assignments {
        Some(total) => {
            let hits = if is_binary(&pooled) {
                let ones = pooled.iter().filter(|&&v| v == 1.0).count();
                hypergeometric_count(n1, n2, ones, &threshold)
                    .expect("tail count is bounded by the assignment count")
            } else {
                enumerate_count(&pooled, n1, kernel::pairwise_sum(&pooled), &threshold)
            };
            (hits as f64 / total as f64, Method::Exact, total as u64)
        }
        None => {
            let key = StreamKey::derive(cfg.seed, stream_id);
            let b = cfg.permutations;
            let hits = resample::monte_carlo_count(&pooled, n1, &threshold, key, b);
            let p = match cfg.estimator {
                Estimator::Paper => hits as f64 / b as f64,
                Estimator::PlusOne => (hits + 1) as f64 / (b + 1) as f64,
            };
            (p, Method::MonteCarlo, b)
        }
    };
    Ok(TestResult {
        observed,
        p,
        validated: validate(observed, p, cfg.alpha),
        method,
        b_used,
    })
}
