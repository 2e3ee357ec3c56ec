//! Loading, validation, normalization and partitioning of embedding sets and
//! prediction logs.
//!
//! Two embedding encodings are supported:
//!
//! * binary: `FEBE` magic, then little-endian `u32` version (1), `n`, `d`,
//!   label-block length, a UTF-8 CSV label block (`id` plus one column per
//!   label key, with header row), then `n * d` little-endian `f32` values in
//!   row-major order;
//! * CSV: header `id,<label keys...>,v0,...,v{d-1}`.
//!
//! Values are widened to `f64` on load. Row order in the file is the
//! canonical sample order for everything downstream.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel;

pub const MAGIC: &[u8; 4] = b"FEBE";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Label key carried by test-set embeddings.
pub const EXPRESSION_KEY: &str = "expression";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Csv,
}

impl EmbeddingFormat {
    /// Binary if the file starts with the magic bytes, CSV otherwise.
    pub fn detect(path: &Path) -> Result<Self> {
        use std::io::Read;
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut head = [0u8; 4];
        let mut read = 0;
        while read < head.len() {
            match file.read(&mut head[read..]) {
                Ok(0) => break,
                Ok(k) => read += k,
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        Ok(if read == 4 && &head == MAGIC {
            EmbeddingFormat::Binary
        } else {
            EmbeddingFormat::Csv
        })
    }
}

/// A labeled collection of fixed-dimension vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f64>,
    label_keys: Vec<String>,
    labels: Vec<Vec<String>>,
}

impl EmbeddingSet {
    /// Build a validated set. `vectors` is row-major `ids.len() x dim`.
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        vectors: Vec<f64>,
        labels: Vec<(String, Vec<String>)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        if vectors.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                found: vectors.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        for (id, row) in ids.iter().zip(vectors.chunks_exact(dim)) {
            if let Some(index) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    id: id.clone(),
                    index,
                });
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNorm { id: id.clone() });
            }
        }
        let mut label_keys = Vec::with_capacity(labels.len());
        let mut columns = Vec::with_capacity(labels.len());
        for (key, column) in labels {
            if column.len() != ids.len() {
                return Err(Error::Invalid(format!(
                    "label column {key:?} has {} values for {} samples",
                    column.len(),
                    ids.len()
                )));
            }
            if label_keys.contains(&key) {
                return Err(Error::Invalid(format!("label key {key:?} declared twice")));
            }
            label_keys.push(key);
            columns.push(column);
        }
        Ok(Self {
            ids,
            dim,
            vectors,
            label_keys,
            labels: columns,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn label_keys(&self) -> &[String] {
        &self.label_keys
    }

    pub fn labels(&self, key: &str) -> Result<&[String]> {
        self.label_keys
            .iter()
            .position(|k| k == key)
            .map(|i| self.labels[i].as_slice())
            .ok_or_else(|| Error::MissingLabel(key.to_string()))
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingSet {
        let mut vectors = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            vectors.extend_from_slice(self.row(i));
        }
        EmbeddingSet {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            dim: self.dim,
            vectors,
            label_keys: self.label_keys.clone(),
            labels: self
                .labels
                .iter()
                .map(|col| indices.iter().map(|&i| col[i].clone()).collect())
                .collect(),
        }
    }

    /// Drop every sample whose id is in `excluded`. Returns the filtered set
    /// and the number of removed samples.
    pub fn without_ids(&self, excluded: &BTreeSet<String>) -> (EmbeddingSet, usize) {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| !excluded.contains(&self.ids[i]))
            .collect();
        let removed = self.len() - keep.len();
        (self.select(&keep), removed)
    }

    pub fn normalize(&self) -> NormalizedEmbeddingSet {
        normalize(self)
    }
}

/// An embedding set with precomputed unit-length rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedEmbeddingSet {
    raw: EmbeddingSet,
    unit: Vec<f64>,
}

impl NormalizedEmbeddingSet {
    pub fn raw(&self) -> &EmbeddingSet {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.raw.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.raw.ids
    }

    pub fn unit_row(&self, i: usize) -> &[f64] {
        let d = self.raw.dim;
        &self.unit[i * d..(i + 1) * d]
    }

    pub fn unit_vectors(&self) -> &[f64] {
        &self.unit
    }

    pub fn select(&self, indices: &[usize]) -> NormalizedEmbeddingSet {
        let d = self.raw.dim;
        let mut unit = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            unit.extend_from_slice(self.unit_row(i));
        }
        NormalizedEmbeddingSet {
            raw: self.raw.select(indices),
            unit,
        }
    }
}

/// Divide each row by its L2 norm; the original vectors are kept.
pub fn normalize(set: &EmbeddingSet) -> NormalizedEmbeddingSet {
    let mut unit = Vec::with_capacity(set.vectors.len());
    for row in set.vectors.chunks_exact(set.dim) {
        let n = kernel::norm(row);
        unit.extend(row.iter().map(|v| v / n));
    }
    NormalizedEmbeddingSet {
        raw: set.clone(),
        unit,
    }
}

/// Categories of one sensitive attribute, in tie-breaking order.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub groups: Vec<String>,
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, groups: Vec<String>) -> Result<Self> {
        let name = name.into();
        if groups.len() < 2 {
            return Err(Error::Invalid(format!(
                "attribute {name:?} needs at least two groups, got {}",
                groups.len()
            )));
        }
        check_unique(&groups)?;
        Ok(Self { name, groups })
    }

    /// Read a schema file (one group per line). The attribute name is the
    /// file stem unless `name` is given.
    pub fn from_file(path: &Path, name: Option<&str>) -> Result<Self> {
        let groups = read_name_list(path)?;
        let name = match name {
            Some(n) => n.to_string(),
            None => path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::format(path, "cannot derive attribute name"))?
                .to_string(),
        };
        Self::new(name, groups).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn position(&self, group: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == group)
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Invalid(format!("name {n:?} listed twice")));
        }
    }
    Ok(())
}

/// One name per non-blank line, surrounding whitespace trimmed, order kept.
pub fn read_name_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(Error::format(path, "no names listed"));
    }
    check_unique(&names).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(names)
}

pub fn write_name_list(path: &Path, names: &[String]) -> Result<()> {
    let mut text = names.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Ids to exclude before analysis, one per line.
pub fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// A disjoint split of a normalized set by one label, in category order.
#[derive(Debug, Clone)]
pub struct Partition {
    pub label_key: String,
    pub groups: Vec<(String, NormalizedEmbeddingSet)>,
}

impl Partition {
    pub fn get(&self, name: &str) -> Option<&NormalizedEmbeddingSet> {
        self.groups.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn counts(&self) -> Vec<(String, usize)> {
        self.groups
            .iter()
            .map(|(n, s)| (n.clone(), s.len()))
            .collect()
    }
}

/// Split `set` by the values of `label_key`. Every sample must carry one of
/// `categories`, and every category must be non-empty.
pub fn partition(
    set: &NormalizedEmbeddingSet,
    label_key: &str,
    categories: &[String],
) -> Result<Partition> {
    let labels = set.raw.labels(label_key)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); categories.len()];
    let mut unknown = BTreeSet::new();
    for (i, label) in labels.iter().enumerate() {
        match categories.iter().position(|c| c == label) {
            Some(g) => members[g].push(i),
            None => {
                unknown.insert(label.clone());
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownLabels {
            key: label_key.to_string(),
            labels: unknown.into_iter().collect(),
        });
    }
    let mut groups = Vec::with_capacity(categories.len());
    for (name, idx) in categories.iter().zip(members) {
        if idx.is_empty() {
            return Err(Error::EmptyGroup(name.clone()));
        }
        groups.push((name.clone(), set.select(&idx)));
    }
    Ok(Partition {
        label_key: label_key.to_string(),
        groups,
    })
}

pub fn load_embeddings(path: &Path, format: Option<EmbeddingFormat>) -> Result<EmbeddingSet> {
    let format = match format {
        Some(f) => f,
        None => EmbeddingFormat::detect(path)?,
    };
    match format {
        EmbeddingFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_binary(&bytes).map_err(|e| annotate(path, e))
        }
        EmbeddingFormat::Csv => {
            let text = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_csv(&text).map_err(|e| annotate(path, e))
        }
    }
}

fn annotate(path: &Path, err: Error) -> Error {
    match err {
        Error::Format { message, .. } => Error::format(path, message),
        other => Error::format(path, other.to_string()),
    }
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet, format: EmbeddingFormat) -> Result<()> {
    let bytes = match format {
        EmbeddingFormat::Binary => encode_binary(set)?,
        EmbeddingFormat::Csv => encode_csv(set)?,
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingSet> {
    let bad = |m: String| Error::format("<binary>", m);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = read_u32(bytes, 8) as usize;
    let d = read_u32(bytes, 12) as usize;
    let label_len = read_u32(bytes, 16) as usize;
    if d == 0 {
        return Err(bad("dimension must be positive".into()));
    }
    let label_end = HEADER_LEN
        .checked_add(label_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("label block extends past end of file".into()))?;
    let block = std::str::from_utf8(&bytes[HEADER_LEN..label_end])
        .map_err(|_| bad("label block is not UTF-8".into()))?;
    let (ids, labels) = parse_label_block(block)?;
    if ids.len() != n {
        return Err(bad(format!(
            "label block has {} rows, header declares {n}",
            ids.len()
        )));
    }
    let payload = &bytes[label_end..];
    let expected = n * d * 4;
    if payload.len() != expected {
        return Err(Error::PayloadSizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let vectors = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect();
    EmbeddingSet::new(ids, d, vectors, labels)
}

type LabelColumns = Vec<(String, Vec<String>)>;

fn parse_label_block(block: &str) -> Result<(Vec<String>, LabelColumns)> {
    let bad = |m: String| Error::format("<label block>", m);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(block.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .clone();
    if header.get(0) != Some("id") {
        return Err(bad("label block must start with an id column".into()));
    }
    let keys: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); keys.len()];
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        ids.push(record[0].to_string());
        for (col, value) in columns.iter_mut().zip(record.iter().skip(1)) {
            col.push(value.to_string());
        }
    }
    Ok((ids, keys.into_iter().zip(columns).collect()))
}

pub fn encode_binary(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let mut block = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend(set.label_keys.iter().cloned());
    block
        .write_record(&header)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for i in 0..set.len() {
        let mut rec = vec![set.ids[i].as_str()];
        rec.extend(set.labels.iter().map(|c| c[i].as_str()));
        block
            .write_record(&rec)
            .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    let block = block
        .into_inner()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Invalid(format!("{what} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + block.len() + set.vectors.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(set.len(), "sample count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.dim, "dimension")?.to_le_bytes());
    out.extend_from_slice(&to_u32(block.len(), "label block")?.to_le_bytes());
    out.extend_from_slice(&block);
    for v in &set.vectors {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_csv(text: &[u8]) -> Result<EmbeddingSet> {
    let bad = |m: String| Error::format("<csv>", m);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let header = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .clone();
    if header.get(0) != Some("id") {
        return Err(bad("first column must be id".into()));
    }
    let first_v = header
        .iter()
        .position(|h| h == "v0")
        .ok_or_else(|| bad("no v0 column".into()))?;
    let keys: Vec<String> = header
        .iter()
        .take(first_v)
        .skip(1)
        .map(str::to_string)
        .collect();
    let dim = header.len() - first_v;
    for (j, h) in header.iter().skip(first_v).enumerate() {
        if h != format!("v{j}") {
            return Err(bad(format!("expected column v{j}, found {h:?}")));
        }
    }
    let mut ids = Vec::new();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); keys.len()];
    let mut vectors = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => Error::DimensionMismatch {
                expected: *expected_len as usize,
                found: *len as usize,
            },
            _ => bad(e.to_string()),
        })?;
        let id = record[0].to_string();
        for (col, value) in columns.iter_mut().zip(record.iter().skip(1).take(keys.len())) {
            col.push(value.to_string());
        }
        for (j, field) in record.iter().skip(first_v).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("sample {id}: cannot parse v{j} = {field:?}")))?;
            vectors.push(v);
        }
        ids.push(id);
    }
    EmbeddingSet::new(ids, dim, vectors, keys.into_iter().zip(columns).collect())
}

pub fn encode_csv(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend(set.label_keys.iter().cloned());
    header.extend((0..set.dim).map(|j| format!("v{j}")));
    w.write_record(&header)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    for i in 0..set.len() {
        let mut rec = vec![set.ids[i].clone()];
        rec.extend(set.labels.iter().map(|c| c[i].clone()));
        rec.extend(set.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)
            .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

/// Per-sample ground truth, prediction and optional attribute labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub ids: Vec<String>,
    pub true_class: Vec<String>,
    pub predicted_class: Vec<String>,
    /// Attribute name to per-sample group; `None` where the cell is empty.
    pub attributes: Vec<(String, Vec<Option<String>>)>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn attribute(&self, name: &str) -> Result<&[Option<String>]> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::MissingLabel(name.to_string()))
    }

    /// Check ids are unique and both class columns use `classes`.
    pub fn validate(&self, classes: &[String]) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.len());
        for (i, id) in self.ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
            for value in [&self.true_class[i], &self.predicted_class[i]] {
                if !classes.contains(value) {
                    return Err(Error::UnknownClass {
                        id: id.clone(),
                        value: value.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Read a prediction log with header `id,true,pred[,<attributes...>]`.
pub fn load_predictions(path: &Path, classes: &[String]) -> Result<PredictionSet> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = parse_predictions(&text).map_err(|e| annotate(path, e))?;
    set.validate(classes).map_err(|e| annotate(path, e))?;
    Ok(set)
}

pub fn parse_predictions(text: &[u8]) -> Result<PredictionSet> {
    let bad = |m: String| Error::format("<predictions>", m);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let header = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .clone();
    let lead: Vec<&str> = header.iter().take(3).collect();
    if lead != ["id", "true", "pred"] {
        return Err(bad(format!(
            "header must start with id,true,pred; found {lead:?}"
        )));
    }
    let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut set = PredictionSet {
        ids: Vec::new(),
        true_class: Vec::new(),
        predicted_class: Vec::new(),
        attributes: names.into_iter().map(|n| (n, Vec::new())).collect(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        set.ids.push(record[0].to_string());
        set.true_class.push(record[1].to_string());
        set.predicted_class.push(record[2].to_string());
        for ((_, col), value) in set.attributes.iter_mut().zip(record.iter().skip(3)) {
            col.push((!value.is_empty()).then(|| value.to_string()));
        }
    }
    Ok(set)
}

pub fn write_predictions(path: &Path, set: &PredictionSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut header = vec!["id".to_string(), "true".into(), "pred".into()];
    header.extend(set.attributes.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)
        .map_err(|e| Error::format(path, e.to_string()))?;
    for i in 0..set.len() {
        let mut rec = vec![
            set.ids[i].clone(),
            set.true_class[i].clone(),
            set.predicted_class[i].clone(),
        ];
        rec.extend(
            set.attributes
                .iter()
                .map(|(_, col)| col[i].clone().unwrap_or_default()),
        );
        w.write_record(&rec)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn small_set(labels: &[&str]) -> EmbeddingSet {
        let n = labels.len();
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        let vectors = (0..n * 3).map(|i| (i % 5) as f64 + 1.0).collect();
        EmbeddingSet::new(ids, 3, vectors, vec![("gender".into(), names(labels))]).unwrap()
    }

    #[test]
    fn parses_csv_with_labels() {
        let text = b"id,expression,v0,v1,v2,v3\na,anger,1,0,0,0\nb,fear,0,1,0,0\nc,anger,0.5,0.5,0,1\n";
        let set = decode_csv(text).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.dim(), 4);
        assert_eq!(set.labels("expression").unwrap(), &names(&["anger", "fear", "anger"])[..]);
        assert_eq!(set.row(2), &[0.5, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn zero_vector_names_the_sample() {
        let text = b"id,v0,v1\nok,1,2\nbad_one,0,0\n";
        let err = decode_csv(text).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { ref id } if id == "bad_one"), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let err = decode_csv(b"id,v0,v1\na,1,NaN\n").unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }

    #[test]
    fn ragged_csv_row_is_dimension_mismatch() {
        let err = decode_csv(b"id,v0,v1\na,1,2\nb,1\n").unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
    }

    #[test]
    fn truncated_binary_payload() {
        let n = 1000;
        let d = 512;
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let set = EmbeddingSet::new(ids, d, vec![1.0; n * d], vec![]).unwrap();
        let mut bytes = encode_binary(&set).unwrap();
        bytes.truncate(bytes.len() - 100);
        let err = decode_binary(&bytes).unwrap_err();
        assert!(err.to_string().contains("payload size mismatch"), "{err}");
    }

    #[test]
    fn binary_round_trip_widens_f32() {
        let set = small_set(&["F", "M", "F"]);
        let bytes = encode_binary(&set).unwrap();
        let back = decode_binary(&bytes).unwrap();
        assert_eq!(back, set);
        assert_eq!(encode_binary(&back).unwrap(), bytes);
    }

    #[test]
    fn normalize_examples() {
        let set = EmbeddingSet::new(
            names(&["a", "b", "c"]),
            4,
            vec![3.0, 4.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0],
            vec![],
        )
        .unwrap();
        let n = normalize(&set);
        assert_eq!(n.unit_row(0), &[0.6, 0.8, 0.0, 0.0]);
        assert_eq!(n.unit_row(1), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(n.unit_row(2), &[-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(n.raw(), &set);
    }

    #[test]
    fn partition_counts_and_unknown_labels() {
        let labels = ["F", "F", "M", "F", "M", "F", "M", "F", "M", "F"];
        let set = small_set(&labels).normalize();
        let p = partition(&set, "gender", &names(&["F", "M"])).unwrap();
        assert_eq!(p.counts(), vec![("F".into(), 6), ("M".into(), 4)]);

        let race = small_set(&["W", "B", "Other"]).normalize();
        let err = partition(&race, "gender", &names(&["W", "B", "A", "I"])).unwrap_err();
        assert!(matches!(err, Error::UnknownLabels { ref labels, .. } if labels == &["Other"]));
    }

    #[test]
    fn partition_empty_group_is_error() {
        let set = small_set(&["F", "F"]).normalize();
        let err = partition(&set, "gender", &names(&["F", "M"])).unwrap_err();
        assert!(matches!(err, Error::EmptyGroup(ref g) if g == "M"));
    }

    #[test]
    fn missing_label_key() {
        let set = small_set(&["F"]).normalize();
        assert!(matches!(
            partition(&set, "race", &names(&["F", "M"])),
            Err(Error::MissingLabel(_))
        ));
    }

    #[test]
    fn predictions_parse_and_validate() {
        let classes = names(&["neutral", "happiness", "surprise", "sadness", "anger", "disgust", "fear"]);
        let good = b"id,true,pred,gender\n1,anger,anger,F\n2,fear,anger,M\n3,fear,fear,\n4,anger,fear,M\n5,sadness,sadness,F\n";
        let set = parse_predictions(good).unwrap();
        set.validate(&classes).unwrap();
        assert_eq!(set.len(), 5);
        assert_eq!(set.attribute("gender").unwrap()[2], None);

        let joy = parse_predictions(b"id,true,pred\n1,anger,joy\n").unwrap();
        assert!(matches!(joy.validate(&classes), Err(Error::UnknownClass { ref value, .. }) if value == "joy"));

        let dup = parse_predictions(b"id,true,pred\nimg_7,anger,anger\nimg_7,fear,fear\n").unwrap();
        assert!(matches!(dup.validate(&classes), Err(Error::DuplicateId(ref id)) if id == "img_7"));
    }

    #[test]
    fn schema_rules() {
        assert!(AttributeSchema::new("g", names(&["F"])).is_err());
        assert!(AttributeSchema::new("g", names(&["F", "F"])).is_err());
        assert!(AttributeSchema::new("g", names(&["F", "M"])).is_ok());
    }

    fn arb_set() -> impl Strategy<Value = EmbeddingSet> {
        (1usize..20, 1usize..6).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(
                    prop_oneof![-1e3f32..-1e-3, 1e-3f32..1e3].prop_map(f64::from),
                    n * d,
                ),
                proptest::collection::vec(prop_oneof![Just("F"), Just("M"), Just("a,b")], n),
            )
                .prop_map(move |(vectors, labels)| {
                    EmbeddingSet::new(
                        (0..n).map(|i| format!("id{i}")).collect(),
                        d,
                        vectors,
                        vec![("g".into(), labels.into_iter().map(String::from).collect())],
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn binary_rewrite_is_byte_identical(set in arb_set()) {
            let bytes = encode_binary(&set).unwrap();
            let again = encode_binary(&decode_binary(&bytes).unwrap()).unwrap();
            prop_assert_eq!(again, bytes);
        }

        #[test]
        fn normalize_is_idempotent(set in arb_set()) {
            let once = normalize(&set);
            let unit = EmbeddingSet::new(
                set.ids().to_vec(), set.dim(), once.unit_vectors().to_vec(), vec![]).unwrap();
            let twice = normalize(&unit);
            for (a, b) in once.unit_vectors().iter().zip(twice.unit_vectors()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            for i in 0..once.len() {
                prop_assert!((kernel::norm(once.unit_row(i)) - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn partition_is_a_true_partition(set in arb_set()) {
            let cats = names(&["F", "M", "a,b"]);
            let norm = set.normalize();
            let labels = set.labels("g").unwrap();
            let present: Vec<String> = cats.iter().filter(|c| labels.contains(c)).cloned().collect();
            let p = partition(&norm, "g", &present).unwrap();
            let mut ids: Vec<String> = p.groups.iter().flat_map(|(_, s)| s.ids().to_vec()).collect();
            ids.sort();
            let mut orig = set.ids().to_vec();
            orig.sort();
            prop_assert_eq!(ids, orig);
        }
    }
}
