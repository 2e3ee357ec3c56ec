//! Stratified true positive rates and performance disparities.

use serde::Serialize;

use crate::association::{argmax_first, csv_field};
use crate::embedio::{AttributeSchema, PredictionSet};
use crate::error::{Error, Result};

/// Outcomes for the samples of one expression within one attribute group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumOutcome {
    pub expression: String,
    pub group: String,
    pub n: usize,
    pub correct: usize,
    /// Per-sample correctness in canonical sample order.
    #[serde(skip)]
    pub indicators: Vec<bool>,
}

impl StratumOutcome {
    pub fn indicator_values(&self) -> Vec<f64> {
        self.indicators
            .iter()
            .map(|&c| if c { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Strata for one expression, plus the samples that could not be placed.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratification {
    pub strata: Vec<StratumOutcome>,
    pub excluded_unknown_group: usize,
    pub excluded_missing_label: usize,
}

/// Stratify without rejecting empty strata. Samples whose attribute label is
/// missing or outside the schema are counted and skipped.
pub fn stratify_counts(
    preds: &PredictionSet,
    expression: &str,
    schema: &AttributeSchema,
) -> Result<Stratification> {
    let labels = preds.attribute(&schema.name)?;
    let mut strata: Vec<StratumOutcome> = schema
        .groups
        .iter()
        .map(|g| StratumOutcome {
            expression: expression.to_string(),
            group: g.clone(),
            n: 0,
            correct: 0,
            indicators: Vec::new(),
        })
        .collect();
    let mut unknown = 0;
    let mut missing = 0;
    for (i, label) in labels.iter().enumerate() {
        if preds.true_class[i] != expression {
            continue;
        }
        let Some(label) = label else {
            missing += 1;
            continue;
        };
        let Some(g) = schema.position(label) else {
            unknown += 1;
            continue;
        };
        let hit = preds.predicted_class[i] == preds.true_class[i];
        let s = &mut strata[g];
        s.n += 1;
        s.correct += usize::from(hit);
        s.indicators.push(hit);
    }
    Ok(Stratification {
        strata,
        excluded_unknown_group: unknown,
        excluded_missing_label: missing,
    })
}

/// One stratum per schema group; an empty stratum is an error.
pub fn stratify(
    preds: &PredictionSet,
    expression: &str,
    schema: &AttributeSchema,
) -> Result<Vec<StratumOutcome>> {
    let strat = stratify_counts(preds, expression, schema)?;
    if let Some(s) = strat.strata.iter().find(|s| s.n == 0) {
        return Err(Error::EmptyStratum {
            expression: expression.to_string(),
            group: s.group.clone(),
        });
    }
    Ok(strat.strata)
}

pub fn tpr(s: &StratumOutcome) -> Result<f64> {
    if s.n == 0 {
        return Err(Error::EmptyStratum {
            expression: s.expression.clone(),
            group: s.group.clone(),
        });
    }
    Ok(s.correct as f64 / s.n as f64)
}

/// `M(j) - M(j')`.
pub fn dip(m_j: f64, m_j_prime: f64) -> f64 {
    m_j - m_j_prime
}

/// Highest-TPR group; the earliest stratum wins ties.
pub fn reference_group_perf(strata: &[StratumOutcome]) -> Result<String> {
    if strata.len() < 2 {
        return Err(Error::Invalid(format!(
            "reference selection needs at least two strata, got {}",
            strata.len()
        )));
    }
    let tprs = strata.iter().map(tpr).collect::<Result<Vec<_>>>()?;
    Ok(strata[argmax_first(&tprs)].group.clone())
}

/// Observed TPR differences against the best-performing group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DipFinding {
    pub expression: String,
    pub attribute: String,
    pub reference_group: String,
    pub entries: Vec<(String, f64)>,
}

pub fn dip_finding(attribute: &str, strata: &[StratumOutcome]) -> Result<DipFinding> {
    let reference = reference_group_perf(strata)?;
    let ref_stratum = strata
        .iter()
        .find(|s| s.group == reference)
        .expect("reference comes from strata");
    let ref_tpr = tpr(ref_stratum)?;
    let entries = strata
        .iter()
        .filter(|s| s.group != reference)
        .map(|s| Ok((s.group.clone(), dip(ref_tpr, tpr(s)?))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DipFinding {
        expression: ref_stratum.expression.clone(),
        attribute: attribute.to_string(),
        reference_group: reference,
        entries,
    })
}

/// CSV with columns `expression,attribute,group,n,correct,tpr`.
pub fn strata_csv(attribute: &str, strata: &[StratumOutcome]) -> String {
    let mut out = String::from("expression,attribute,group,n,correct,tpr\n");
    for s in strata {
        let rate = if s.n == 0 {
            "NaN".to_string()
        } else {
            (s.correct as f64 / s.n as f64).to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&s.expression),
            csv_field(attribute),
            csv_field(&s.group),
            s.n,
            s.correct,
            rate
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(rows: &[(&str, &str, Option<&str>)]) -> PredictionSet {
        PredictionSet {
            ids: (0..rows.len()).map(|i| format!("i{i}")).collect(),
            true_class: rows.iter().map(|r| r.0.to_string()).collect(),
            predicted_class: rows.iter().map(|r| r.1.to_string()).collect(),
            attributes: vec![(
                "gender".into(),
                rows.iter().map(|r| r.2.map(String::from)).collect(),
            )],
        }
    }

    fn gender() -> AttributeSchema {
        AttributeSchema::new("gender", vec!["F".into(), "M".into()]).unwrap()
    }

    fn stratum(group: &str, n: usize, correct: usize) -> StratumOutcome {
        StratumOutcome {
            expression: "anger".into(),
            group: group.into(),
            n,
            correct,
            indicators: (0..n).map(|i| i < correct).collect(),
        }
    }

    #[test]
    fn stratify_counts_by_group() {
        let mut rows = vec![];
        for i in 0..10 {
            let g = if i < 6 { "F" } else { "M" };
            rows.push(("anger", if i % 2 == 0 { "anger" } else { "fear" }, Some(g)));
        }
        rows.push(("fear", "fear", Some("F")));
        let p = preds(&rows);
        let s = stratify(&p, "anger", &gender()).unwrap();
        assert_eq!((s[0].n, s[1].n), (6, 4));
        assert_eq!(s.iter().map(|s| s.n).sum::<usize>(), 10);
        assert_eq!(s[0].correct, 3);
        assert_eq!(s[0].indicators, vec![true, false, true, false, true, false]);
    }

    #[test]
    fn empty_stratum_names_cell() {
        let p = preds(&[("anger", "anger", Some("F")), ("fear", "fear", Some("M"))]);
        let err = stratify(&p, "anger", &gender()).unwrap_err();
        assert!(
            matches!(err, Error::EmptyStratum { ref expression, ref group } if expression == "anger" && group == "M")
        );
    }

    #[test]
    fn out_of_schema_and_missing_labels_are_counted() {
        let p = preds(&[
            ("anger", "anger", Some("F")),
            ("anger", "anger", Some("X")),
            ("anger", "anger", None),
            ("anger", "fear", Some("M")),
        ]);
        let s = stratify_counts(&p, "anger", &gender()).unwrap();
        assert_eq!(s.excluded_unknown_group, 1);
        assert_eq!(s.excluded_missing_label, 1);
        assert_eq!(s.strata.iter().map(|s| s.n).sum::<usize>(), 2);
    }

    #[test]
    fn missing_attribute_column() {
        let p = preds(&[("anger", "anger", Some("F"))]);
        let race = AttributeSchema::new("race", vec!["W".into(), "B".into()]).unwrap();
        assert!(matches!(stratify(&p, "anger", &race), Err(Error::MissingLabel(_))));
    }

    #[test]
    fn tpr_and_dip_values() {
        assert_eq!(tpr(&stratum("F", 4, 4)).unwrap(), 1.0);
        assert_eq!(tpr(&stratum("F", 4, 0)).unwrap(), 0.0);
        assert_eq!(tpr(&stratum("F", 4, 3)).unwrap(), 0.75);
        assert!(tpr(&stratum("F", 0, 0)).is_err());
        assert_eq!(dip(0.3, 0.3), 0.0);
        assert_eq!(dip(1.0, 0.0), 1.0);
        assert_eq!(dip(0.75, 0.5), 0.25);
    }

    #[test]
    fn reference_selection_and_ties() {
        let s = [stratum("W", 10, 9), stratum("B", 10, 7), stratum("A", 10, 7)];
        assert_eq!(reference_group_perf(&s).unwrap(), "W");
        let tie = [stratum("W", 10, 5), stratum("B", 4, 2), stratum("A", 2, 1)];
        assert_eq!(reference_group_perf(&tie).unwrap(), "W");
        let last = [stratum("W", 10, 1), stratum("B", 10, 2), stratum("A", 10, 3)];
        assert_eq!(reference_group_perf(&last).unwrap(), "A");
        assert!(reference_group_perf(&last[..1]).is_err());
    }

    #[test]
    fn dip_finding_entries_bounded() {
        let s = [stratum("W", 10, 4), stratum("B", 8, 8), stratum("A", 5, 0)];
        let f = dip_finding("race", &s).unwrap();
        assert_eq!(f.reference_group, "B");
        assert_eq!(f.entries, vec![("W".into(), 0.6), ("A".into(), 1.0)]);
    }

    #[test]
    fn tpr_ignores_sample_order() {
        let mut s = stratum("F", 7, 3);
        let before = tpr(&s).unwrap();
        s.indicators.reverse();
        assert_eq!(tpr(&s).unwrap(), before);
    }
}
