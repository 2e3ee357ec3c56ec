//! Association between expression embeddings and attribute-group embeddings.
//!
//! The association of an expression set `E` with a group set `S` is the mean
//! of `(cos(z_e, z_s) + 1) / 2` over all pairs. Because cosine is the dot
//! product of unit vectors, the double sum factors into
//! `(mean_unit(E) . mean_unit(S)) / 2 + 1/2`, which is the production path.
//! [`association_naive`] keeps the literal pairwise form as an oracle.

use serde::Serialize;

use crate::embedio::{NormalizedEmbeddingSet, Partition};
use crate::error::{Error, Result};
use crate::kernel;

/// Mean of a group's unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub count: usize,
    pub mean_unit: Vec<f64>,
}

impl GroupSummary {
    pub fn dim(&self) -> usize {
        self.mean_unit.len()
    }
}

pub fn group_summary(group: &str, set: &NormalizedEmbeddingSet) -> Result<GroupSummary> {
    if set.is_empty() {
        return Err(Error::EmptyGroup(group.to_string()));
    }
    let mut mean = kernel::pairwise_row_sum(set.unit_vectors(), set.dim());
    let n = set.len() as f64;
    for v in &mut mean {
        *v /= n;
    }
    Ok(GroupSummary {
        group: group.to_string(),
        count: set.len(),
        mean_unit: mean,
    })
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Factored association, in `[0, 1]`.
pub fn association(expr: &GroupSummary, grp: &GroupSummary) -> Result<f64> {
    check_dims(expr.dim(), grp.dim())?;
    let mean_cos = kernel::dot(&expr.mean_unit, &grp.mean_unit);
    Ok((mean_cos / 2.0 + 0.5).clamp(0.0, 1.0))
}

/// Literal pairwise evaluation; O(n * m * d).
pub fn association_naive(
    expr: &NormalizedEmbeddingSet,
    grp: &NormalizedEmbeddingSet,
) -> Result<f64> {
    if expr.is_empty() {
        return Err(Error::EmptyGroup("expression set".into()));
    }
    if grp.is_empty() {
        return Err(Error::EmptyGroup("group set".into()));
    }
    check_dims(expr.dim(), grp.dim())?;
    let mut total = 0.0;
    for i in 0..expr.len() {
        let ze = expr.raw().row(i);
        let ne = kernel::norm(ze);
        for j in 0..grp.len() {
            let zs = grp.raw().row(j);
            let cos = kernel::dot(ze, zs) / (ne * kernel::norm(zs));
            total += cos + 1.0;
        }
    }
    Ok(total / (2.0 * expr.len() as f64 * grp.len() as f64))
}

/// Association values over expressions x attribute groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationTable {
    pub attribute: String,
    pub expressions: Vec<String>,
    pub groups: Vec<String>,
    /// Row-major `expressions x groups`.
    pub values: Vec<f64>,
    pub expression_counts: Vec<usize>,
    pub group_counts: Vec<usize>,
}

impl AssociationTable {
    pub fn value(&self, e: usize, j: usize) -> f64 {
        self.values[e * self.groups.len() + j]
    }

    pub fn row(&self, e: usize) -> &[f64] {
        let n = self.groups.len();
        &self.values[e * n..(e + 1) * n]
    }

    pub fn expression_index(&self, name: &str) -> Result<usize> {
        self.expressions
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| Error::Invalid(format!("unknown expression {name:?}")))
    }

    pub fn group_index(&self, name: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| Error::Invalid(format!("unknown group {name:?}")))
    }

    /// CSV with columns `expression,group,A,count_e,count_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("expression,group,A,count_e,count_s\n");
        for (e, expr) in self.expressions.iter().enumerate() {
            for (j, group) in self.groups.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_field(expr),
                    csv_field(group),
                    self.value(e, j),
                    self.expression_counts[e],
                    self.group_counts[j]
                ));
            }
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Summaries for every partition cell, in partition order.
pub fn summarize(partition: &Partition) -> Result<Vec<GroupSummary>> {
    partition
        .groups
        .iter()
        .map(|(name, set)| group_summary(name, set))
        .collect()
}

pub fn association_table_from_summaries(
    attribute: &str,
    expressions: &[GroupSummary],
    groups: &[GroupSummary],
) -> Result<AssociationTable> {
    let mut values = Vec::with_capacity(expressions.len() * groups.len());
    for e in expressions {
        for g in groups {
            values.push(association(e, g)?);
        }
    }
    Ok(AssociationTable {
        attribute: attribute.to_string(),
        expressions: expressions.iter().map(|s| s.group.clone()).collect(),
        groups: groups.iter().map(|s| s.group.clone()).collect(),
        values,
        expression_counts: expressions.iter().map(|s| s.count).collect(),
        group_counts: groups.iter().map(|s| s.count).collect(),
    })
}

/// Test set partitioned by expression, probe set partitioned by group.
pub fn association_table(
    attribute: &str,
    test: &Partition,
    probe: &Partition,
) -> Result<AssociationTable> {
    association_table_from_summaries(attribute, &summarize(test)?, &summarize(probe)?)
}

/// `A(e, j) - A(e, j')`.
pub fn dia(table: &AssociationTable, e: &str, j: &str, j_prime: &str) -> Result<f64> {
    let e = table.expression_index(e)?;
    let a = table.group_index(j)?;
    let b = table.group_index(j_prime)?;
    Ok(table.value(e, a) - table.value(e, b))
}

/// Index of the largest value; the earliest index wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Group most strongly associated with expression `e`.
pub fn reference_group_assoc(table: &AssociationTable, e: &str) -> Result<String> {
    let e = table.expression_index(e)?;
    Ok(table.groups[argmax_first(table.row(e))].clone())
}

/// Observed differential associations against the reference group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiaFinding {
    pub expression: String,
    pub attribute: String,
    pub reference_group: String,
    pub entries: Vec<(String, f64)>,
}

pub fn dia_finding(table: &AssociationTable, e: &str) -> Result<DiaFinding> {
    let ei = table.expression_index(e)?;
    let row = table.row(ei);
    let reference = argmax_first(row);
    let entries = table
        .groups
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != reference)
        .map(|(j, g)| (g.clone(), row[reference] - row[j]))
        .collect();
    Ok(DiaFinding {
        expression: e.to_string(),
        attribute: table.attribute.clone(),
        reference_group: table.groups[reference].clone(),
        entries,
    })
}

/// Raw-cosine differential association of target sets `x`, `y` with
/// attribute sets `a`, `b`:
/// `sum_x s(x, A, B) - sum_y s(y, A, B)` where
/// `s(w, A, B) = mean_a cos(w, a) - mean_b cos(w, b)`.
pub fn ieat_differential(
    x: &NormalizedEmbeddingSet,
    y: &NormalizedEmbeddingSet,
    a: &NormalizedEmbeddingSet,
    b: &NormalizedEmbeddingSet,
) -> Result<f64> {
    for (name, set) in [("X", x), ("Y", y), ("A", a), ("B", b)] {
        if set.is_empty() {
            return Err(Error::EmptyGroup(name.into()));
        }
        check_dims(x.dim(), set.dim())?;
    }
    let mean_cos = |w: &[f64], set: &NormalizedEmbeddingSet| {
        (0..set.len())
            .map(|i| kernel::dot(w, set.unit_row(i)))
            .sum::<f64>()
            / set.len() as f64
    };
    let s = |w: &[f64]| mean_cos(w, a) - mean_cos(w, b);
    let sx: f64 = (0..x.len()).map(|i| s(x.unit_row(i))).sum();
    let sy: f64 = (0..y.len()).map(|i| s(y.unit_row(i))).sum();
    Ok(sx - sy)
}
