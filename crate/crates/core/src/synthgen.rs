//! Synthetic scenarios with planted (or absent) bias.
//!
//! Every concept (expression or attribute group) has a unit anchor
//! direction. Samples are `anchor + noise` with isotropic Gaussian noise
//! whose expected squared norm is `noise_scale^2`. In a biased scenario the
//! planted group's probe members are additionally shifted by
//! `tilt * anchor(target expression)`, and its predictions for the target
//! expression are correct more often.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedio::{AttributeSchema, EmbeddingSet, PredictionSet, EXPRESSION_KEY};
use crate::error::{Error, Result};
use crate::kernel;

/// The seven basic expressions.
pub fn basic_expressions() -> Vec<String> {
    [
        "neutral",
        "happiness",
        "surprise",
        "sadness",
        "anger",
        "disgust",
        "fear",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub dim: usize,
    pub expressions: Vec<String>,
    pub attribute: AttributeSchema,
    /// Explicit unit anchors per expression; random orthonormal if absent.
    #[serde(default)]
    pub expression_anchors: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub group_anchors: Option<Vec<Vec<f64>>>,
    pub tilt: f64,
    pub target_expression: String,
    pub planted_group: String,
    pub test_per_expression: usize,
    pub probe_per_group: usize,
    pub noise_scale: f64,
    /// Prediction-log samples per (expression, group) cell.
    pub predictions_per_cell: usize,
    pub base_accuracy: f64,
    /// Extra accuracy of the planted group on the target expression.
    pub accuracy_gap: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Seven expressions, binary gender, moderate planted bias on anger.
    pub fn demo(seed: u64) -> Self {
        Self {
            dim: 32,
            expressions: basic_expressions(),
            attribute: AttributeSchema::new("gender", vec!["F".into(), "M".into()])
                .expect("two distinct groups"),
            expression_anchors: None,
            group_anchors: None,
            tilt: 1.0,
            target_expression: "anger".into(),
            planted_group: "M".into(),
            test_per_expression: 200,
            probe_per_group: 300,
            noise_scale: 1.0,
            predictions_per_cell: 150,
            base_accuracy: 0.7,
            accuracy_gap: 0.15,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSpec {
    pub dim: usize,
    pub expressions: Vec<String>,
    pub attribute: AttributeSchema,
    pub test_per_expression: usize,
    pub probe_per_group: usize,
    pub predictions_per_cell: usize,
    pub accuracy: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorCosine {
    pub a: String,
    pub b: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub test: EmbeddingSet,
    pub probe: EmbeddingSet,
    pub predictions: PredictionSet,
    pub anchor_cosines: Vec<AnchorCosine>,
}

fn check_positive(what: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Invalid(format!("{what} must be at least 1")));
    }
    Ok(())
}

fn check_probability(what: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Invalid(format!("{what} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_noise(v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Invalid(format!("noise_scale must be positive, got {v}")));
    }
    Ok(())
}

/// `count` random unit vectors, orthonormalized when `count <= dim`.
fn random_anchors(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if count <= dim {
            for u in &out {
                let c = kernel::dot(&v, u);
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= c * y;
                }
            }
        }
        let n = kernel::norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}

fn checked_anchors(given: &[Vec<f64>], count: usize, dim: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    if given.len() != count {
        return Err(Error::Invalid(format!(
            "{what}: expected {count} anchors, got {}",
            given.len()
        )));
    }
    given
        .iter()
        .map(|a| {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.len(),
                });
            }
            let n = kernel::norm(a);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Invalid(format!("{what}: anchor with zero norm")));
            }
            Ok(a.iter().map(|x| x / n).collect())
        })
        .collect()
}

fn cosines(names: &[String], anchors: &[Vec<f64>]) -> Vec<AnchorCosine> {
    let mut out = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            out.push(AnchorCosine {
                a: names[i].clone(),
                b: names[j].clone(),
                cosine: kernel::dot(&anchors[i], &anchors[j]),
            });
        }
    }
    out
}

struct Sampler {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl Sampler {
    fn new(seed: u64, dim: usize, noise_scale: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: Normal::new(0.0, noise_scale / (dim as f64).sqrt()).expect("positive std"),
        }
    }

    /// Append `center + noise` to `out`, redrawing the rare all-zero sample.
    fn push(&mut self, center: &[f64], out: &mut Vec<f64>) {
        loop {
            let row: Vec<f64> = center
                .iter()
                .map(|c| c + self.noise.sample(&mut self.rng))
                .collect();
            if row.iter().any(|&v| v != 0.0) {
                out.extend(row);
                return;
            }
        }
    }

    fn predict(&mut self, truth: &str, accuracy: f64, classes: &[String]) -> String {
        if self.rng.random_bool(accuracy) {
            return truth.to_string();
        }
        let others: Vec<&String> = classes.iter().filter(|c| *c != truth).collect();
        if others.is_empty() {
            return truth.to_string();
        }
        others[self.rng.random_range(0..others.len())].clone()
    }
}

fn expression_set(
    sampler: &mut Sampler,
    expressions: &[String],
    anchors: &[Vec<f64>],
    per: usize,
    dim: usize,
) -> Result<EmbeddingSet> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut vectors = Vec::with_capacity(expressions.len() * per * dim);
    for (e, anchor) in expressions.iter().zip(anchors) {
        for i in 0..per {
            ids.push(format!("test_{e}_{i}"));
            labels.push(e.clone());
            sampler.push(anchor, &mut vectors);
        }
    }
    EmbeddingSet::new(ids, dim, vectors, vec![(EXPRESSION_KEY.to_string(), labels)])
}

fn predictions(
    sampler: &mut Sampler,
    expressions: &[String],
    schema: &AttributeSchema,
    per_cell: usize,
    accuracy: impl Fn(&str, &str) -> f64,
) -> PredictionSet {
    let mut set = PredictionSet {
        ids: Vec::new(),
        true_class: Vec::new(),
        predicted_class: Vec::new(),
        attributes: vec![(schema.name.clone(), Vec::new())],
    };
    for e in expressions {
        for g in &schema.groups {
            for i in 0..per_cell {
                let pred = sampler.predict(e, accuracy(e, g), expressions);
                set.ids.push(format!("pred_{e}_{g}_{i}"));
                set.true_class.push(e.clone());
                set.predicted_class.push(pred);
                set.attributes[0].1.push(Some(g.clone()));
            }
        }
    }
    set
}

pub fn gen_biased(spec: &ScenarioSpec) -> Result<SyntheticData> {
    check_positive("dim", spec.dim)?;
    check_positive("test_per_expression", spec.test_per_expression)?;
    check_positive("probe_per_group", spec.probe_per_group)?;
    check_positive("predictions_per_cell", spec.predictions_per_cell)?;
    check_noise(spec.noise_scale)?;
    check_probability("base_accuracy", spec.base_accuracy)?;
    check_probability("base_accuracy + accuracy_gap", spec.base_accuracy + spec.accuracy_gap)?;
    if !(spec.tilt >= 0.0 && spec.tilt.is_finite()) {
        return Err(Error::Invalid(format!("tilt must be non-negative, got {}", spec.tilt)));
    }
    if spec.expressions.is_empty() {
        return Err(Error::Invalid("no expressions".into()));
    }
    let target = spec
        .expressions
        .iter()
        .position(|e| *e == spec.target_expression)
        .ok_or_else(|| Error::Invalid(format!("unknown target expression {:?}", spec.target_expression)))?;
    let planted = spec
        .attribute
        .position(&spec.planted_group)
        .ok_or_else(|| Error::Invalid(format!("unknown planted group {:?}", spec.planted_group)))?;

    let n_expr = spec.expressions.len();
    let n_groups = spec.attribute.len();
    let mut sampler = Sampler::new(spec.seed, spec.dim, spec.noise_scale);
    let (expr_anchors, group_anchors) = match (&spec.expression_anchors, &spec.group_anchors) {
        (Some(e), Some(g)) => (
            checked_anchors(e, n_expr, spec.dim, "expression anchors")?,
            checked_anchors(g, n_groups, spec.dim, "group anchors")?,
        ),
        (None, None) => {
            let mut all = random_anchors(&mut sampler.rng, n_expr + n_groups, spec.dim);
            let groups = all.split_off(n_expr);
            (all, groups)
        }
        _ => {
            return Err(Error::Invalid(
                "give both expression and group anchors, or neither".into(),
            ))
        }
    };

    let test = expression_set(
        &mut sampler,
        &spec.expressions,
        &expr_anchors,
        spec.test_per_expression,
        spec.dim,
    )?;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for (g, (name, anchor)) in spec.attribute.groups.iter().zip(&group_anchors).enumerate() {
        let center: Vec<f64> = if g == planted {
            anchor
                .iter()
                .zip(&expr_anchors[target])
                .map(|(a, t)| a + spec.tilt * t)
                .collect()
        } else {
            anchor.clone()
        };
        for i in 0..spec.probe_per_group {
            ids.push(format!("probe_{name}_{i}"));
            labels.push(name.clone());
            sampler.push(&center, &mut vectors);
        }
    }
    let probe = EmbeddingSet::new(ids, spec.dim, vectors, vec![(spec.attribute.name.clone(), labels)])?;

    let predictions = predictions(
        &mut sampler,
        &spec.expressions,
        &spec.attribute,
        spec.predictions_per_cell,
        |e, g| {
            if e == spec.target_expression && g == spec.planted_group {
                spec.base_accuracy + spec.accuracy_gap
            } else {
                spec.base_accuracy
            }
        },
    );

    let names: Vec<String> = spec
        .expressions
        .iter()
        .chain(&spec.attribute.groups)
        .cloned()
        .collect();
    let anchors: Vec<Vec<f64>> = expr_anchors.into_iter().chain(group_anchors).collect();
    Ok(SyntheticData {
        test,
        probe,
        predictions,
        anchor_cosines: cosines(&names, &anchors),
    })
}

/// Exchangeable groups: every probe member comes from one shared anchor and
/// every prediction has the same correctness probability.
pub fn gen_null(spec: &NullSpec) -> Result<SyntheticData> {
    check_positive("dim", spec.dim)?;
    check_positive("test_per_expression", spec.test_per_expression)?;
    check_positive("probe_per_group", spec.probe_per_group)?;
    check_positive("predictions_per_cell", spec.predictions_per_cell)?;
    check_noise(spec.noise_scale)?;
    check_probability("accuracy", spec.accuracy)?;
    if spec.expressions.is_empty() {
        return Err(Error::Invalid("no expressions".into()));
    }
    let n_expr = spec.expressions.len();
    let mut sampler = Sampler::new(spec.seed, spec.dim, spec.noise_scale);
    let mut anchors = random_anchors(&mut sampler.rng, n_expr + 1, spec.dim);
    let shared = anchors.pop().expect("n_expr + 1 anchors");
    let test = expression_set(
        &mut sampler,
        &spec.expressions,
        &anchors,
        spec.test_per_expression,
        spec.dim,
    )?;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for name in &spec.attribute.groups {
        for i in 0..spec.probe_per_group {
            ids.push(format!("probe_{name}_{i}"));
            labels.push(name.clone());
            sampler.push(&shared, &mut vectors);
        }
    }
    let probe = EmbeddingSet::new(ids, spec.dim, vectors, vec![(spec.attribute.name.clone(), labels)])?;
    let predictions = predictions(
        &mut sampler,
        &spec.expressions,
        &spec.attribute,
        spec.predictions_per_cell,
        |_, _| spec.accuracy,
    );
    let mut names = spec.expressions.clone();
    names.push("shared".into());
    anchors.push(shared);
    Ok(SyntheticData {
        test,
        probe,
        predictions,
        anchor_cosines: cosines(&names, &anchors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            test_per_expression: 20,
            probe_per_group: 30,
            predictions_per_cell: 10,
            ..ScenarioSpec::demo(seed)
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_biased(&small_spec(4)).unwrap();
        let b = gen_biased(&small_spec(4)).unwrap();
        assert_eq!(a, b);
        let c = gen_biased(&small_spec(5)).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn shapes_and_labels() {
        let d = gen_biased(&small_spec(1)).unwrap();
        assert_eq!(d.test.len(), 7 * 20);
        assert_eq!(d.probe.len(), 2 * 30);
        assert_eq!(d.predictions.len(), 7 * 2 * 10);
        assert_eq!(d.probe.labels("gender").unwrap()[0], "F");
        // 9 anchors, orthonormal in 32 dims
        assert_eq!(d.anchor_cosines.len(), 36);
        assert!(d.anchor_cosines.iter().all(|c| c.cosine.abs() < 1e-12));
        d.predictions.validate(&basic_expressions()).unwrap();
    }

    #[test]
    fn zero_samples_rejected() {
        let mut s = small_spec(1);
        s.probe_per_group = 0;
        assert!(gen_biased(&s).is_err());
        let null = NullSpec {
            dim: 8,
            expressions: basic_expressions(),
            attribute: s.attribute.clone(),
            test_per_expression: 0,
            probe_per_group: 5,
            predictions_per_cell: 5,
            accuracy: 0.5,
            noise_scale: 1.0,
            seed: 0,
        };
        assert!(gen_null(&null).is_err());
    }

    #[test]
    fn explicit_anchors_are_normalized() {
        let mut s = small_spec(2);
        s.dim = 3;
        s.expressions = vec!["anger".into()];
        s.expression_anchors = Some(vec![vec![2.0, 0.0, 0.0]]);
        s.group_anchors = Some(vec![vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let d = gen_biased(&s).unwrap();
        assert!(d.anchor_cosines.iter().all(|c| c.cosine == 0.0));
        s.group_anchors = None;
        assert!(gen_biased(&s).is_err());
    }
}
