//! Average bias as the significance threshold moves from 0.01 to 0.10,
//! re-thresholding cached p-values.

use febias::evalcmp::{alpha_sweep, default_alphas, sweep_csv, Exclusions};
use febias::statmod::{run_dia_suite, PermutationConfig};
use febias::synthgen::{gen_biased, ScenarioSpec};

fn main() -> febias::Result<()> {
    let spec = ScenarioSpec {
        tilt: 0.15,
        probe_per_group: 120,
        ..ScenarioSpec::demo(11)
    };
    let data = gen_biased(&spec)?;
    let findings = run_dia_suite(
        &data.test.normalize(),
        &data.probe.normalize(),
        &spec.expressions,
        &spec.attribute,
        &PermutationConfig::with_seed(11),
    )?;
    let sweep = alpha_sweep(&findings, &default_alphas(), &Exclusions::none())?;
    print!("{}", sweep_csv(&sweep));
    Ok(())
}
