//! Write an embedding set in both on-disk formats and read it back.

use febias::embedio::{load_embeddings, write_embeddings, EmbeddingFormat, EmbeddingSet};

fn main() -> febias::Result<()> {
    let set = EmbeddingSet::new(
        vec!["a".into(), "b".into(), "c".into()],
        3,
        vec![1.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 2.0],
        vec![("expression".into(), vec!["anger".into(), "anger".into(), "fear".into()])],
    )?;
    let dir = std::env::temp_dir().join("febias-embedding-io");
    std::fs::create_dir_all(&dir).map_err(|e| febias::Error::Invalid(e.to_string()))?;

    for (format, name) in [(EmbeddingFormat::Binary, "set.febe"), (EmbeddingFormat::Csv, "set.csv")] {
        let path = dir.join(name);
        write_embeddings(&path, &set, format)?;
        let back = load_embeddings(&path, None)?;
        println!(
            "{}: {} rows, dim {}, detected {:?}",
            path.display(),
            back.len(),
            back.dim(),
            EmbeddingFormat::detect(&path)?
        );
    }

    let unit = set.normalize();
    println!("unit row 1: {:?}", unit.unit_row(1));
    Ok(())
}
