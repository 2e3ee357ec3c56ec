//! Association of each expression with each attribute group, and the
//! reference group per expression.

use febias::association::{association_table, dia_finding};
use febias::embedio::{partition, EXPRESSION_KEY};
use febias::synthgen::{gen_biased, ScenarioSpec};

fn main() -> febias::Result<()> {
    let spec = ScenarioSpec::demo(1);
    let data = gen_biased(&spec)?;
    let test = partition(&data.test.normalize(), EXPRESSION_KEY, &spec.expressions)?;
    let probe = partition(&data.probe.normalize(), "gender", &spec.attribute.groups)?;
    let table = association_table("gender", &test, &probe)?;
    print!("{}", table.to_csv());
    for e in &spec.expressions {
        let f = dia_finding(&table, e)?;
        println!("{e}: reference {}, DiA {:?}", f.reference_group, f.entries);
    }
    Ok(())
}
