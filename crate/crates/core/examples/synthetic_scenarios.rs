//! Null and planted-bias scenarios written in the standard file formats.

use febias::embedio::{write_embeddings, write_predictions, EmbeddingFormat};
use febias::synthgen::{basic_expressions, gen_biased, gen_null, NullSpec, ScenarioSpec};

fn main() -> febias::Result<()> {
    let dir = std::env::temp_dir().join("febias-synthetic");
    std::fs::create_dir_all(&dir).map_err(|e| febias::Error::Invalid(e.to_string()))?;

    let biased = gen_biased(&ScenarioSpec::demo(5))?;
    write_embeddings(&dir.join("test.febe"), &biased.test, EmbeddingFormat::Binary)?;
    write_embeddings(&dir.join("probe.febe"), &biased.probe, EmbeddingFormat::Binary)?;
    write_predictions(&dir.join("predictions.csv"), &biased.predictions)?;
    let worst = biased
        .anchor_cosines
        .iter()
        .map(|c| c.cosine.abs())
        .fold(0.0, f64::max);
    println!("biased scenario in {}; largest anchor cosine {worst:.1e}", dir.display());

    let null = gen_null(&NullSpec {
        dim: 32,
        expressions: basic_expressions(),
        attribute: ScenarioSpec::demo(0).attribute,
        test_per_expression: 100,
        probe_per_group: 200,
        predictions_per_cell: 100,
        accuracy: 0.7,
        noise_scale: 1.0,
        seed: 5,
    })?;
    println!(
        "null scenario: {} test, {} probe, {} predictions",
        null.test.len(),
        null.probe.len(),
        null.predictions.len()
    );
    Ok(())
}
