//! Markdown tables in "reference → significant groups" notation.

use febias::report::render_markdown;
use febias::statmod::{run_dia_suite, run_dip_suite, PermutationConfig};
use febias::synthgen::{gen_biased, ScenarioSpec};

fn main() -> febias::Result<()> {
    let spec = ScenarioSpec::demo(21);
    let data = gen_biased(&spec)?;
    let cfg = PermutationConfig::with_seed(21);
    let mut findings = run_dia_suite(
        &data.test.normalize(),
        &data.probe.normalize(),
        &spec.expressions,
        &spec.attribute,
        &cfg,
    )?;
    findings.extend(run_dip_suite(&data.predictions, &spec.expressions, &spec.attribute, &cfg)?);
    print!("{}", render_markdown(&findings, cfg.alpha)?);
    Ok(())
}
