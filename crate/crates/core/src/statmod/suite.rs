//! End-to-end test suites over every expression of one attribute.

use rayon::prelude::*;

use super::{permutation_test, BiasFinding, FindingEntry, PermutationConfig, Source, StreamId};
use crate::association::{
    argmax_first, association_table_from_summaries, summarize, AssociationTable,
    GroupSummary,
};
use crate::embedio::{partition, AttributeSchema, NormalizedEmbeddingSet, PredictionSet, EXPRESSION_KEY};
use crate::error::{Error, Result};
use crate::kernel;
use crate::perfmetrics::{reference_group_perf, stratify_counts, tpr, StratumOutcome};

fn project(expr: &GroupSummary, set: &NormalizedEmbeddingSet) -> Result<Vec<f64>> {
    if expr.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: expr.dim(),
            found: set.dim(),
        });
    }
    Ok((0..set.len())
        .map(|i| kernel::dot(set.unit_row(i), &expr.mean_unit))
        .collect())
}

/// Projections `t_i = unit_i . mean_unit(expr)` of two probe groups.
///
/// The association is affine in the group's mean unit vector, so the
/// differential association of any relabeling of the two groups equals half
/// the difference of the relabeled means of `t`.
pub fn project_scalars(
    expr: &GroupSummary,
    group_a: &NormalizedEmbeddingSet,
    group_b: &NormalizedEmbeddingSet,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((project(expr, group_a)?, project(expr, group_b)?))
}

#[derive(Debug, Clone)]
pub struct DiaSuiteOutput {
    pub table: AssociationTable,
    pub findings: Vec<BiasFinding>,
}

/// Differential-association suite with its association table.
///
/// Test embeddings are split by their `expression` label over `expressions`;
/// probe embeddings by the attribute's label over its groups. Only probe
/// membership is permuted.
pub fn dia_suite(
    test: &NormalizedEmbeddingSet,
    probe: &NormalizedEmbeddingSet,
    expressions: &[String],
    schema: &AttributeSchema,
    cfg: &PermutationConfig,
) -> Result<DiaSuiteOutput> {
    cfg.check()?;
    let test_parts = partition(test, EXPRESSION_KEY, expressions)?;
    let probe_parts = partition(probe, &schema.name, &schema.groups)?;
    let expr_summaries = summarize(&test_parts)?;
    let group_summaries = summarize(&probe_parts)?;
    let table = association_table_from_summaries(&schema.name, &expr_summaries, &group_summaries)?;

    let findings = expr_summaries
        .par_iter()
        .enumerate()
        .map(|(e, summary)| {
            let row = table.row(e);
            let reference = argmax_first(row);
            let projections = probe_parts
                .groups
                .iter()
                .map(|(_, set)| project(summary, set).map(|t| halve(&t)))
                .collect::<Result<Vec<_>>>()?;
            let ref_name = &schema.groups[reference];
            let entries = (0..schema.groups.len())
                .filter(|&k| k != reference)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|k| {
                    let group = &schema.groups[k];
                    let id = StreamId::new(["dia", &summary.group, &schema.name, ref_name, group]);
                    let observed = row[reference] - row[k];
                    let r = permutation_test(
                        &projections[reference],
                        &projections[k],
                        observed,
                        cfg,
                        &id,
                    )?;
                    Ok(FindingEntry::new(group.clone(), r))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BiasFinding {
                expression: summary.group.clone(),
                attribute: schema.name.clone(),
                reference_group: ref_name.clone(),
                source: Source::Dia,
                entries,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiaSuiteOutput { table, findings })
}

fn halve(t: &[f64]) -> Vec<f64> {
    t.iter().map(|v| v / 2.0).collect()
}

pub fn run_dia_suite(
    test: &NormalizedEmbeddingSet,
    probe: &NormalizedEmbeddingSet,
    expressions: &[String],
    schema: &AttributeSchema,
    cfg: &PermutationConfig,
) -> Result<Vec<BiasFinding>> {
    Ok(dia_suite(test, probe, expressions, schema, cfg)?.findings)
}

/// What to do with strata that are empty or small.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StratumPolicy {
    /// Any empty stratum is an error.
    #[default]
    Strict,
    /// Drop groups with fewer than `k` samples for an expression.
    DropBelow(usize),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DroppedStratum {
    pub expression: String,
    pub group: String,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct DipSuiteOutput {
    pub findings: Vec<BiasFinding>,
    /// Strata actually tested, per expression.
    pub strata: Vec<StratumOutcome>,
    pub dropped: Vec<DroppedStratum>,
    pub excluded_unknown_group: usize,
    pub excluded_missing_label: usize,
}

/// Performance-disparity suite over 0/1 correctness indicators.
pub fn dip_suite(
    preds: &PredictionSet,
    expressions: &[String],
    schema: &AttributeSchema,
    cfg: &PermutationConfig,
    policy: StratumPolicy,
) -> Result<DipSuiteOutput> {
    cfg.check()?;
    let mut kept_per_expr = Vec::with_capacity(expressions.len());
    let mut dropped = Vec::new();
    let mut excluded_unknown_group = 0;
    let mut excluded_missing_label = 0;
    for e in expressions {
        let strat = stratify_counts(preds, e, schema)?;
        excluded_unknown_group += strat.excluded_unknown_group;
        excluded_missing_label += strat.excluded_missing_label;
        let mut kept = Vec::new();
        for s in strat.strata {
            match policy {
                StratumPolicy::Strict if s.n == 0 => {
                    return Err(Error::EmptyStratum {
                        expression: e.clone(),
                        group: s.group,
                    })
                }
                StratumPolicy::DropBelow(k) if s.n < k.max(1) => dropped.push(DroppedStratum {
                    expression: e.clone(),
                    group: s.group,
                    n: s.n,
                }),
                _ => kept.push(s),
            }
        }
        if kept.len() < 2 {
            return Err(Error::Invalid(format!(
                "expression {e:?}: fewer than two strata remain for attribute {:?}",
                schema.name
            )));
        }
        kept_per_expr.push(kept);
    }

    let findings = kept_per_expr
        .par_iter()
        .zip(expressions.par_iter())
        .map(|(strata, e)| dip_finding_tested(e, strata, &schema.name, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(DipSuiteOutput {
        findings,
        strata: kept_per_expr.into_iter().flatten().collect(),
        dropped,
        excluded_unknown_group,
        excluded_missing_label,
    })
}

fn dip_finding_tested(
    expression: &str,
    strata: &[StratumOutcome],
    attribute: &str,
    cfg: &PermutationConfig,
) -> Result<BiasFinding> {
    let reference = reference_group_perf(strata)?;
    let ref_stratum = strata
        .iter()
        .find(|s| s.group == reference)
        .expect("reference comes from strata");
    let ref_values = ref_stratum.indicator_values();
    let ref_tpr = tpr(ref_stratum)?;
    let entries = strata
        .par_iter()
        .filter(|s| s.group != reference)
        .map(|s| {
            let id = StreamId::new(["dip", expression, attribute, &reference, &s.group]);
            let observed = ref_tpr - tpr(s)?;
            let r = permutation_test(&ref_values, &s.indicator_values(), observed, cfg, &id)?;
            Ok(FindingEntry::new(s.group.clone(), r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasFinding {
        expression: expression.to_string(),
        attribute: attribute.to_string(),
        reference_group: reference,
        source: Source::Dip,
        entries,
    })
}

pub fn run_dip_suite(
    preds: &PredictionSet,
    expressions: &[String],
    schema: &AttributeSchema,
    cfg: &PermutationConfig,
) -> Result<Vec<BiasFinding>> {
    Ok(dip_suite(preds, expressions, schema, cfg, StratumPolicy::Strict)?.findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{association_naive, group_summary};
    use crate::embedio::EmbeddingSet;
    use crate::statmod::{relabeling, Method, StreamKey};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize, tag: &str) -> NormalizedEmbeddingSet {
        let v: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingSet::new((0..n).map(|i| format!("{tag}{i}")).collect(), d, v, vec![])
            .unwrap()
            .normalize()
    }

    #[test]
    fn projection_examples() {
        let expr = GroupSummary {
            group: "e".into(),
            count: 1,
            mean_unit: vec![1.0, 0.0, 0.0],
        };
        let set = EmbeddingSet::new(
            vec!["a".into(), "b".into()],
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            vec![],
        )
        .unwrap()
        .normalize();
        let (t, _) = project_scalars(&expr, &set, &set).unwrap();
        assert_eq!(t, vec![1.0, 0.0]);
        let wrong = GroupSummary {
            mean_unit: vec![1.0, 0.0],
            ..expr
        };
        assert!(project_scalars(&wrong, &set, &set).is_err());
    }

    #[test]
    fn projection_fast_path_matches_full_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let d = rng.random_range(2..10);
            let n_ze = rng.random_range(1..12);
            let ze = random_set(&mut rng, n_ze, d, "e");
            let n_ga = rng.random_range(1..15);
            let ga = random_set(&mut rng, n_ga, d, "a");
            let n_gb = rng.random_range(1..15);
            let gb = random_set(&mut rng, n_gb, d, "b");
            let summary = group_summary("e", &ze).unwrap();
            let (ta, tb) = project_scalars(&summary, &ga, &gb).unwrap();
            let a = halve(&ta);
            let b = halve(&tb);

            // unpermuted: matches the table route
            let fast = a.iter().sum::<f64>() / a.len() as f64 - b.iter().sum::<f64>() / b.len() as f64;
            let table = association_naive(&ze, &ga).unwrap() - association_naive(&ze, &gb).unwrap();
            assert!((fast - table).abs() < 1e-9, "trial {trial}");

            // every drawn relabeling: recompute both associations from scratch
            let key = StreamKey::derive(trial, &StreamId::new(["fast-path"]));
            let stats = super::super::permuted_statistics(&a, &b, key, 25);
            let pooled_rows: Vec<&[f64]> = (0..ga.len())
                .map(|i| ga.raw().row(i))
                .chain((0..gb.len()).map(|i| gb.raw().row(i)))
                .collect();
            for (bi, s) in stats.iter().enumerate() {
                let in_a = relabeling(&key, bi as u64, ga.len(), gb.len());
                let mut mask = vec![false; pooled_rows.len()];
                for &i in &in_a {
                    mask[i] = true;
                }
                let build = |want: bool| {
                    let rows: Vec<f64> = pooled_rows
                        .iter()
                        .zip(&mask)
                        .filter(|(_, &m)| m == want)
                        .flat_map(|(r, _)| r.iter().copied())
                        .collect();
                    let n = rows.len() / d;
                    EmbeddingSet::new((0..n).map(|i| format!("p{i}")).collect(), d, rows, vec![])
                        .unwrap()
                        .normalize()
                };
                let full = association_naive(&ze, &build(true)).unwrap()
                    - association_naive(&ze, &build(false)).unwrap();
                assert!((s - full).abs() < 1e-9);
            }
        }
    }

    fn preds_from(rows: &[(&str, bool, &str)]) -> PredictionSet {
        PredictionSet {
            ids: (0..rows.len()).map(|i| format!("i{i}")).collect(),
            true_class: rows.iter().map(|r| r.0.to_string()).collect(),
            predicted_class: rows
                .iter()
                .map(|r| if r.1 { r.0.to_string() } else { "other".to_string() })
                .collect(),
            attributes: vec![("gender".into(), rows.iter().map(|r| Some(r.2.to_string())).collect())],
        }
    }

    fn gender() -> AttributeSchema {
        AttributeSchema::new("gender", vec!["F".into(), "M".into()]).unwrap()
    }

    #[test]
    fn dip_suite_separated_strata() {
        let p = preds_from(&[
            ("anger", false, "F"),
            ("anger", false, "F"),
            ("anger", false, "F"),
            ("anger", true, "M"),
            ("anger", true, "M"),
            ("anger", true, "M"),
        ]);
        let f = run_dip_suite(&p, &["anger".into()], &gender(), &PermutationConfig::with_seed(3))
            .unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].reference_group, "M");
        let e = &f[0].entries[0];
        assert_eq!((e.observed, e.p, e.method), (1.0, 0.05, Method::Exact));
    }

    #[test]
    fn dip_suite_identical_outcomes_not_validated() {
        let p = preds_from(&[
            ("fear", true, "F"),
            ("fear", false, "F"),
            ("fear", true, "M"),
            ("fear", false, "M"),
        ]);
        let f = run_dip_suite(&p, &["fear".into()], &gender(), &PermutationConfig::with_seed(3))
            .unwrap();
        assert_eq!(f[0].entries[0].validated, 0.0);
        assert_eq!(f[0].reference_group, "F");
    }

    #[test]
    fn dip_policy_drops_small_strata() {
        let schema =
            AttributeSchema::new("gender", vec!["F".into(), "M".into(), "X".into()]).unwrap();
        let mut rows = vec![("anger", true, "F"); 5];
        rows.extend(vec![("anger", false, "M"); 5]);
        rows.push(("anger", true, "X"));
        let p = preds_from(&rows);
        let cfg = PermutationConfig::with_seed(1);
        let out = dip_suite(&p, &["anger".into()], &schema, &cfg, StratumPolicy::DropBelow(3))
            .unwrap();
        assert_eq!(out.dropped, vec![DroppedStratum {
            expression: "anger".into(),
            group: "X".into(),
            n: 1
        }]);
        assert_eq!(out.findings[0].entries.len(), 1);

        let strict = dip_suite(&p, &["fear".into()], &schema, &cfg, StratumPolicy::Strict);
        assert!(matches!(strict, Err(Error::EmptyStratum { .. })));
    }
}
