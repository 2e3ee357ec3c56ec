//! Agreement between bias findings, aggregate bias, and threshold sweeps.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::association::csv_field;
use crate::error::{Error, Result};
use crate::statmod::BiasFinding;

/// L1 agreement of one method with the ground truth for one expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub attribute: String,
    pub expression: String,
    /// NaN when the reference groups differ.
    pub l1: f64,
    pub reference_match: bool,
}

fn group_set(f: &BiasFinding) -> BTreeSet<&str> {
    std::iter::once(f.reference_group.as_str())
        .chain(f.entries.iter().map(|e| e.group.as_str()))
        .collect()
}

/// Mean absolute difference of validated values over the non-reference
/// groups, or NaN if the two findings picked different reference groups.
pub fn l1_compare(method: &BiasFinding, truth: &BiasFinding) -> Result<ComparisonRow> {
    if method.expression != truth.expression || method.attribute != truth.attribute {
        return Err(Error::Mismatch(format!(
            "comparing {}/{} with {}/{}",
            method.attribute, method.expression, truth.attribute, truth.expression
        )));
    }
    if group_set(method) != group_set(truth) || method.entries.len() != truth.entries.len() {
        return Err(Error::Mismatch(format!(
            "{}/{}: group sets differ ({:?} vs {:?})",
            truth.attribute,
            truth.expression,
            group_set(method),
            group_set(truth)
        )));
    }
    let row = |l1, reference_match| ComparisonRow {
        attribute: truth.attribute.clone(),
        expression: truth.expression.clone(),
        l1,
        reference_match,
    };
    if method.reference_group != truth.reference_group {
        return Ok(row(f64::NAN, false));
    }
    let mut total = 0.0;
    for t in &truth.entries {
        let m = method
            .entry(&t.group)
            .expect("group sets checked equal above");
        total += (m.validated - t.validated).abs();
    }
    Ok(row(total / truth.entries.len() as f64, true))
}

type Key = (String, String);

fn key(f: &BiasFinding) -> Key {
    (f.attribute.clone(), f.expression.clone())
}

fn index(findings: &[BiasFinding]) -> Result<BTreeMap<Key, &BiasFinding>> {
    let mut map = BTreeMap::new();
    for f in findings {
        if map.insert(key(f), f).is_some() {
            return Err(Error::Mismatch(format!(
                "duplicate finding for {}/{}",
                f.attribute, f.expression
            )));
        }
    }
    Ok(map)
}

/// Row per (attribute, expression), in the truth's order.
pub fn compare_findings(method: &[BiasFinding], truth: &[BiasFinding]) -> Result<Vec<ComparisonRow>> {
    let m = index(method)?;
    let t = index(truth)?;
    if m.keys().ne(t.keys()) {
        return Err(Error::Mismatch(
            "method and truth cover different attribute/expression pairs".into(),
        ));
    }
    truth.iter().map(|tf| l1_compare(m[&key(tf)], tf)).collect()
}

/// (attribute, expression) pairs whose method findings are excluded from
/// aggregation because the reference group disagreed with the truth.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Exclusions(BTreeSet<Key>);

impl Exclusions {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: &[ComparisonRow]) -> Self {
        Exclusions(
            rows.iter()
                .filter(|r| !r.reference_match)
                .map(|r| (r.attribute.clone(), r.expression.clone()))
                .collect(),
        )
    }

    pub fn contains(&self, attribute: &str, expression: &str) -> bool {
        self.0
            .contains(&(attribute.to_string(), expression.to_string()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvgBiasResult {
    /// NaN when every entry was excluded.
    pub value: f64,
    pub included_entries: usize,
    pub excluded_nan: usize,
    pub alpha: Option<f64>,
    /// Mean validated value per attribute, by attribute name.
    pub per_attribute: Vec<(String, f64)>,
}

/// Average validated disparity.
///
/// Entries are averaged within each attribute first (each attribute
/// contributes `(n - 1) * |E|` entries), then across attributes. Excluded
/// entries shrink the denominators and are counted in `excluded_nan`.
pub fn avg_bias(findings: &[BiasFinding], excluded: &Exclusions) -> Result<AvgBiasResult> {
    if findings.is_empty() {
        return Err(Error::Invalid("no findings to aggregate".into()));
    }
    let mut by_attr: BTreeMap<&str, Vec<(&str, &str, f64)>> = BTreeMap::new();
    let mut excluded_nan = 0;
    for f in findings {
        let bucket = by_attr.entry(f.attribute.as_str()).or_default();
        if excluded.contains(&f.attribute, &f.expression) {
            excluded_nan += f.entries.len();
            continue;
        }
        for e in &f.entries {
            bucket.push((f.expression.as_str(), e.group.as_str(), e.validated));
        }
    }
    let mut per_attribute = Vec::new();
    let mut included_entries = 0;
    for (attr, mut entries) in by_attr {
        if entries.is_empty() {
            continue;
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let sum: f64 = entries.iter().map(|e| e.2).sum();
        included_entries += entries.len();
        per_attribute.push((attr.to_string(), sum / entries.len() as f64));
    }
    let value = if per_attribute.is_empty() {
        f64::NAN
    } else {
        per_attribute.iter().map(|(_, v)| v).sum::<f64>() / per_attribute.len() as f64
    };
    Ok(AvgBiasResult {
        value,
        included_entries,
        excluded_nan,
        alpha: None,
        per_attribute,
    })
}

/// Thresholds 0.01, 0.02, ..., 0.10.
pub fn default_alphas() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweep {
    pub alphas: Vec<f64>,
    pub curve: Vec<AvgBiasResult>,
}

/// Re-threshold stored `(observed, p)` pairs at each alpha and aggregate.
pub fn alpha_sweep(
    findings: &[BiasFinding],
    alphas: &[f64],
    excluded: &Exclusions,
) -> Result<AlphaSweep> {
    let mut curve = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Invalid(format!("alpha {alpha} outside (0, 1)")));
        }
        let at: Vec<BiasFinding> = findings.iter().map(|f| f.rethreshold(alpha)).collect();
        let mut r = avg_bias(&at, excluded)?;
        r.alpha = Some(alpha);
        curve.push(r);
    }
    Ok(AlphaSweep {
        alphas: alphas.to_vec(),
        curve,
    })
}

/// One externally produced set of findings (e.g. one architecture).
#[derive(Debug, Clone)]
pub struct Run {
    pub name: String,
    pub findings: Vec<BiasFinding>,
    pub excluded: Exclusions,
}

pub fn multi_run_compare(runs: &[Run]) -> Result<Vec<(String, AvgBiasResult)>> {
    let vocab = |r: &Run| -> BTreeSet<Key> { r.findings.iter().map(key).collect() };
    if let Some(first) = runs.first() {
        let reference = vocab(first);
        for r in &runs[1..] {
            if vocab(r) != reference {
                return Err(Error::Mismatch(format!(
                    "run {:?} covers different attribute/expression pairs than {:?}",
                    r.name, first.name
                )));
            }
        }
    }
    runs.iter()
        .map(|r| Ok((r.name.clone(), avg_bias(&r.findings, &r.excluded)?)))
        .collect()
}

/// `value * 100` with two decimals; NaN stays `NaN`.
pub fn percent(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{:.2}", v * 100.0)
    }
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("expression,l1_percent,reference_match\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(&r.expression),
            percent(r.l1),
            r.reference_match
        ));
    }
    out
}

pub fn sweep_csv(sweep: &AlphaSweep) -> String {
    let mut out = String::from("alpha,avg_bias_percent\n");
    for (a, r) in sweep.alphas.iter().zip(&sweep.curve) {
        out.push_str(&format!("{a:.2},{}\n", percent(r.value)));
    }
    out
}

pub fn runs_csv(results: &[(String, AvgBiasResult)]) -> String {
    let mut out = String::from("run,avg_bias_percent\n");
    for (name, r) in results {
        out.push_str(&format!("{},{}\n", csv_field(name), percent(r.value)));
    }
    out
}
