//! Markdown tables in the "reference → significant groups" notation.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::evalcmp::percent;
use crate::statmod::{BiasFinding, Source};

/// Direction and value cells for one finding.
///
/// Groups whose validated value is 0 are joined to the reference with "/";
/// the remaining groups follow "→". Several significant groups are listed
/// in parentheses, with their percentages in the same order.
pub fn cells(f: &BiasFinding) -> Result<(String, String)> {
    let mut quiet = vec![f.reference_group.as_str()];
    let mut loud = Vec::new();
    for e in &f.entries {
        if !e.validated.is_finite() {
            return Err(Error::Invalid(format!(
                "{}/{}: group {:?} has no validated value",
                f.attribute, f.expression, e.group
            )));
        }
        if e.validated == 0.0 {
            quiet.push(&e.group);
        } else {
            loud.push((e.group.as_str(), percent(e.validated)));
        }
    }
    let head = quiet.join("/");
    Ok(match loud.as_slice() {
        [] => (head, "0".to_string()),
        [(g, v)] => (format!("{head} → {g}"), v.clone()),
        many => {
            let groups: Vec<&str> = many.iter().map(|(g, _)| *g).collect();
            let values: Vec<&str> = many.iter().map(|(_, v)| v.as_str()).collect();
            (
                format!("{head} → ({})", groups.join(", ")),
                format!("({})", values.join(", ")),
            )
        }
    })
}

fn groups_of(f: &BiasFinding) -> BTreeSet<&str> {
    std::iter::once(f.reference_group.as_str())
        .chain(f.entries.iter().map(|e| e.group.as_str()))
        .collect()
}

fn title(source: Source) -> &'static str {
    match source {
        Source::Dia => "differential association",
        Source::Dip => "performance disparity (TPR)",
    }
}

/// One table per (source, attribute), in order of first appearance.
///
/// Errors if an attribute's findings disagree on the group set, repeat an
/// expression, or carry a non-finite validated value.
pub fn render_markdown(findings: &[BiasFinding], alpha: f64) -> Result<String> {
    if findings.is_empty() {
        return Err(Error::Invalid("no findings to report".into()));
    }
    let mut sections: Vec<(Source, &str)> = Vec::new();
    for f in findings {
        if !sections.contains(&(f.source, f.attribute.as_str())) {
            sections.push((f.source, &f.attribute));
        }
    }

    let mut out = String::new();
    let mut tests = 0usize;
    for (source, attr) in sections {
        let rows: Vec<&BiasFinding> = findings
            .iter()
            .filter(|f| f.source == source && f.attribute == attr)
            .collect();
        let groups = groups_of(rows[0]);
        let mut seen = BTreeSet::new();
        out.push_str(&format!("## {attr}: {}\n\n", title(source)));
        out.push_str("| expression | groups | validated (%) |\n|---|---|---|\n");
        for f in rows {
            if groups_of(f) != groups {
                return Err(Error::Mismatch(format!(
                    "{attr}/{}: group set differs from the other expressions",
                    f.expression
                )));
            }
            if !seen.insert(f.expression.as_str()) {
                return Err(Error::Invalid(format!(
                    "{attr}: expression {:?} reported twice",
                    f.expression
                )));
            }
            let (direction, value) = cells(f)?;
            tests += f.entries.len();
            out.push_str(&format!("| {} | {direction} | {value} |\n", f.expression));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "A value of 0 marks a disparity that is not significant at alpha = {alpha}; \
         the observed disparity itself may still be nonzero. \
         Permutation tests performed: {tests}.\n"
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statmod::{FindingEntry, Method};

    fn finding(attr: &str, expr: &str, reference: &str, entries: &[(&str, f64)]) -> BiasFinding {
        BiasFinding {
            expression: expr.into(),
            attribute: attr.into(),
            reference_group: reference.into(),
            source: Source::Dia,
            entries: entries
                .iter()
                .map(|&(g, v)| FindingEntry {
                    group: g.into(),
                    observed: v.max(0.01),
                    p: if v > 0.0 { 0.001 } else { 0.3 },
                    validated: v,
                    method: Method::MonteCarlo,
                    b_used: 10_000,
                })
                .collect(),
        }
    }

    #[test]
    fn single_significant_group() {
        let (d, v) = cells(&finding("gender", "anger", "M", &[("F", 0.0930)])).unwrap();
        assert_eq!(d, "M → F");
        assert_eq!(v, "9.30");
    }

    #[test]
    fn nothing_significant() {
        let (d, v) = cells(&finding("gender", "surprise", "F", &[("M", 0.0)])).unwrap();
        assert_eq!(d, "F/M");
        assert_eq!(v, "0");
    }

    #[test]
    fn mixed_race_cell() {
        let f = finding("race", "anger", "W", &[("B", 0.0512), ("I", 0.0), ("A", 0.0)]);
        assert_eq!(cells(&f).unwrap().0, "W/I/A → B");
        let f = finding("race", "fear", "W", &[("B", 0.0823), ("A", 0.1092), ("I", 0.0963)]);
        assert_eq!(
            cells(&f).unwrap(),
            ("W → (B, A, I)".to_string(), "(8.23, 10.92, 9.63)".to_string())
        );
    }

    #[test]
    fn table_and_footer() {
        let fs = vec![
            finding("gender", "anger", "M", &[("F", 0.0930)]),
            finding("gender", "surprise", "F", &[("M", 0.0)]),
        ];
        let md = render_markdown(&fs, 0.05).unwrap();
        assert!(md.contains("| anger | M → F | 9.30 |"));
        assert!(md.contains("| surprise | F/M | 0 |"));
        assert!(md.contains("Permutation tests performed: 2."));
    }

    #[test]
    fn incomplete_findings_rejected() {
        let fs = vec![
            finding("race", "anger", "W", &[("B", 0.0), ("I", 0.0)]),
            finding("race", "fear", "W", &[("B", 0.0)]),
        ];
        assert!(render_markdown(&fs, 0.05).is_err());
        let dup = vec![
            finding("gender", "anger", "M", &[("F", 0.0)]),
            finding("gender", "anger", "M", &[("F", 0.0)]),
        ];
        assert!(render_markdown(&dup, 0.05).is_err());
        assert!(cells(&finding("gender", "anger", "M", &[("F", f64::NAN)])).is_err());
    }
}
