//! Agree a method's findings with ground truth, then aggregate several runs.

use febias::evalcmp::{avg_bias, compare_findings, multi_run_compare, percent, Exclusions, Run};
use febias::statmod::{dia_suite, dip_suite, PermutationConfig, StratumPolicy};
use febias::synthgen::{gen_biased, ScenarioSpec};

fn main() -> febias::Result<()> {
    let mut runs = Vec::new();
    for seed in 0..3u64 {
        let spec = ScenarioSpec {
            tilt: 0.3 * seed as f64,
            ..ScenarioSpec::demo(seed)
        };
        let data = gen_biased(&spec)?;
        let cfg = PermutationConfig {
            permutations: 2000,
            ..PermutationConfig::with_seed(seed)
        };
        let method = dia_suite(
            &data.test.normalize(),
            &data.probe.normalize(),
            &spec.expressions,
            &spec.attribute,
            &cfg,
        )?
        .findings;
        // the prediction log plays the part of ground truth here
        let truth = dip_suite(&data.predictions, &spec.expressions, &spec.attribute, &cfg, StratumPolicy::Strict)?
            .findings;
        let rows = compare_findings(&method, &truth)?;
        for r in &rows {
            println!("tilt {:.1} {:<10} L1 {}", spec.tilt, r.expression, percent(r.l1));
        }
        let excluded = Exclusions::from_rows(&rows);
        let avg = avg_bias(&method, &excluded)?;
        println!("  AvgBias {} ({} entries, {} excluded)", percent(avg.value), avg.included_entries, avg.excluded_nan);
        runs.push(Run {
            name: format!("tilt-{:.1}", spec.tilt),
            findings: method,
            excluded,
        });
    }
    for (name, r) in multi_run_compare(&runs)? {
        println!("{name}: {}", percent(r.value));
    }
    Ok(())
}
