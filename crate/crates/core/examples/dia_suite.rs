//! Differential-association suite on a synthetic scenario with bias planted
//! toward one group for "anger".

use febias::statmod::{dia_suite, PermutationConfig};
use febias::synthgen::{gen_biased, ScenarioSpec};

fn main() -> febias::Result<()> {
    let spec = ScenarioSpec::demo(7);
    let data = gen_biased(&spec)?;
    let out = dia_suite(
        &data.test.normalize(),
        &data.probe.normalize(),
        &spec.expressions,
        &spec.attribute,
        &PermutationConfig::with_seed(7),
    )?;
    println!("planted: {} leans toward {}", spec.planted_group, spec.target_expression);
    for f in &out.findings {
        for e in &f.entries {
            println!(
                "{:<10} {} vs {}: DiA {:.4}, p {:.4}, validated {:.4}",
                f.expression, f.reference_group, e.group, e.observed, e.p, e.validated
            );
        }
    }
    Ok(())
}
