//! True-positive-rate disparities from a prediction log, with small strata
//! dropped instead of rejected.

use febias::embedio::AttributeSchema;
use febias::statmod::{dip_suite, PermutationConfig, StratumPolicy};
use febias::synthgen::{gen_biased, ScenarioSpec};

fn main() -> febias::Result<()> {
    let spec = ScenarioSpec {
        attribute: AttributeSchema::new("race", vec!["W".into(), "B".into(), "I".into(), "A".into()])?,
        planted_group: "W".into(),
        ..ScenarioSpec::demo(3)
    };
    let data = gen_biased(&spec)?;
    let out = dip_suite(
        &data.predictions,
        &spec.expressions,
        &spec.attribute,
        &PermutationConfig::with_seed(3),
        StratumPolicy::DropBelow(20),
    )?;
    for f in &out.findings {
        let cells: Vec<String> = f
            .entries
            .iter()
            .map(|e| format!("{} {:.3} (p {:.3})", e.group, e.observed, e.p))
            .collect();
        println!("{:<10} ref {}: {}", f.expression, f.reference_group, cells.join(", "));
    }
    println!("dropped strata: {}", out.dropped.len());
    Ok(())
}
