//! The `febias` command line.
//!
//! Every command writes a `manifest.json` into its output directory and
//! every result file carries the manifest's SHA-256 digest: JSON files in a
//! `manifest_digest` field, CSV and markdown files in a leading comment.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::association::csv_field;
use crate::embedio::{
    load_embeddings, load_predictions, read_id_list, read_name_list, write_embeddings,
    write_name_list, write_predictions, AttributeSchema, EmbeddingFormat, PredictionSet,
};
use crate::error::{Error, Result};
use crate::evalcmp::{
    alpha_sweep, avg_bias, compare_findings, comparison_csv, multi_run_compare, runs_csv,
    sweep_csv, AvgBiasResult, ComparisonRow, Exclusions, Run,
};
use crate::perfmetrics::strata_csv;
use crate::report::render_markdown;
use crate::statmod::{
    dia_suite, dip_suite, BiasFinding, DroppedStratum, Estimator, PermutationConfig, Source,
    StratumPolicy, TIE_TOLERANCE,
};
use crate::synthgen::{gen_biased, gen_null, AnchorCosine, NullSpec, ScenarioSpec};

#[derive(Debug, Parser)]
#[command(name = "febias", version, about = "Bias evaluation for expression classifiers")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Differential association between expression and attribute embeddings.
    BiasDia(DiaArgs),
    /// True-positive-rate disparities in a prediction log.
    BiasDip(DipArgs),
    /// L1 agreement of a method's findings with ground-truth findings.
    Compare(CompareArgs),
    /// Average validated bias of one or more runs.
    Avgbias(AvgBiasArgs),
    /// Average bias as a function of the significance threshold.
    AlphaSweep(SweepArgs),
    /// Generate a synthetic scenario.
    Synth(SynthArgs),
    /// Render findings as markdown tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Paper,
    PlusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Md,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbeddingFormatArg {
    Binary,
    Csv,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Attribute schema file (one group per line); repeatable.
    #[arg(long = "attribute", required = true)]
    attributes: Vec<PathBuf>,
    /// Expression vocabulary file (one name per line).
    #[arg(long)]
    expressions: PathBuf,
    /// Random relabelings per test.
    #[arg(long, default_value_t = 10_000)]
    b: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "paper")]
    estimator: EstimatorArg,
    /// Enumerate exactly when the number of assignments is at most this.
    #[arg(long, default_value_t = 100_000)]
    exact_threshold: u64,
    /// Sample ids to leave out, one per line.
    #[arg(long)]
    exclude: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_values = ["json"])]
    format: Vec<OutFormat>,
}

#[derive(Debug, Args)]
struct DiaArgs {
    #[arg(long)]
    test_embeddings: PathBuf,
    #[arg(long)]
    probe_embeddings: PathBuf,
    #[command(flatten)]
    common: TestArgs,
}

#[derive(Debug, Args)]
struct DipArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Drop groups with fewer samples than this instead of failing.
    #[arg(long)]
    min_stratum_size: Option<usize>,
    #[command(flatten)]
    common: TestArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Findings of the method under evaluation.
    #[arg(long)]
    method: PathBuf,
    /// Ground-truth findings.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct AvgBiasArgs {
    /// `name=findings.json`; repeatable.
    #[arg(long = "run", required = true)]
    runs: Vec<String>,
    /// Ground truth; entries whose reference group disagrees are excluded.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Findings file; repeatable.
    #[arg(long = "findings", required = true)]
    findings: Vec<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// `start:end:step` or a comma-separated list.
    #[arg(long, default_value = "0.01:0.10:0.01")]
    alphas: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario JSON; the built-in demo scenario when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Treat `--spec` as a null scenario.
    #[arg(long)]
    null: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "binary")]
    embedding_format: EmbeddingFormatArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Findings file; repeatable.
    #[arg(long = "findings", required = true)]
    findings: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Findings as written by `bias-dia` and `bias-dip`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FindingsFile {
    pub manifest_digest: String,
    pub source: Source,
    pub alpha: f64,
    pub findings: Vec<BiasFinding>,
    #[serde(default)]
    pub dropped: Vec<DroppedStratum>,
    #[serde(default)]
    pub excluded_unknown_group: usize,
    #[serde(default)]
    pub excluded_missing_label: usize,
}

impl FindingsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct InputDigest {
    role: String,
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<PermutationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tie_tolerance: Option<f64>,
    reference_tie_break: &'static str,
    schemas: Vec<AttributeSchema>,
    expressions: Vec<String>,
    inputs: Vec<InputDigest>,
    options: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

impl RunManifest {
    fn new(command: &'static str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: None,
            tie_tolerance: None,
            reference_tie_break: "first group in schema order",
            schemas: Vec::new(),
            expressions: Vec::new(),
            inputs: Vec::new(),
            options: serde_json::Map::new(),
            // Only a caller-pinned time keeps reruns byte-identical.
            timestamp: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|v| v.parse().ok()),
        }
    }

    fn input(&mut self, role: impl Into<String>, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputDigest {
            role: role.into(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn option(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("plain data serializes");
        self.options.insert(key.to_string(), v);
    }

    /// Write `manifest.json` and return its digest.
    fn finish(&self, out_dir: &Path) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("plain data serializes");
        bytes.push(b'\n');
        write_file(&out_dir.join("manifest.json"), &bytes)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serializes");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn write_csv(path: &Path, digest: &str, body: &str) -> Result<()> {
    write_file(path, format!("# manifest: {digest}\n{body}").as_bytes())
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.threads {
        None => dispatch(cli.command),
        Some(0) => Err(Error::Invalid("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(|| dispatch(cli.command)),
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::BiasDia(a) => cmd_bias_dia(&a),
        Command::BiasDip(a) => cmd_bias_dip(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Avgbias(a) => cmd_avgbias(&a),
        Command::AlphaSweep(a) => cmd_alpha_sweep(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

struct Prepared {
    cfg: PermutationConfig,
    schemas: Vec<AttributeSchema>,
    expressions: Vec<String>,
    excluded: BTreeSet<String>,
    manifest: RunManifest,
}

fn prepare(command: &'static str, a: &TestArgs) -> Result<Prepared> {
    let cfg = PermutationConfig {
        permutations: a.b,
        alpha: a.alpha,
        seed: a.seed,
        exact_threshold: a.exact_threshold,
        estimator: match a.estimator {
            EstimatorArg::Paper => Estimator::Paper,
            EstimatorArg::PlusOne => Estimator::PlusOne,
        },
    };
    cfg.check().map_err(|e| Error::Invalid(e.to_string()))?;
    let mut manifest = RunManifest::new(command);
    let expressions = read_name_list(&a.expressions)?;
    manifest.input("expressions", &a.expressions)?;
    let mut schemas = Vec::new();
    for p in &a.attributes {
        let s = AttributeSchema::from_file(p, None)?;
        if schemas.iter().any(|o: &AttributeSchema| o.name == s.name) {
            return Err(Error::Invalid(format!("attribute {:?} given twice", s.name)));
        }
        manifest.input(format!("attribute:{}", s.name), p)?;
        schemas.push(s);
    }
    let excluded = match &a.exclude {
        Some(p) => {
            manifest.input("exclude", p)?;
            read_id_list(p)?
        }
        None => BTreeSet::new(),
    };
    manifest.config = Some(cfg.clone());
    manifest.tie_tolerance = Some(TIE_TOLERANCE);
    manifest.schemas = schemas.clone();
    manifest.expressions = expressions.clone();
    prepare_out_dir(&a.out_dir)?;
    Ok(Prepared {
        cfg,
        schemas,
        expressions,
        excluded,
        manifest,
    })
}

fn findings_csv(findings: &[BiasFinding]) -> String {
    let mut out =
        String::from("expression,attribute,reference_group,group,observed,p,validated,method,b_used\n");
    for f in findings {
        for e in &f.entries {
            let method = match e.method {
                crate::statmod::Method::Exact => "exact",
                crate::statmod::Method::MonteCarlo => "monte_carlo",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{method},{}\n",
                csv_field(&f.expression),
                csv_field(&f.attribute),
                csv_field(&f.reference_group),
                csv_field(&e.group),
                e.observed,
                e.p,
                e.validated,
                e.b_used
            ));
        }
    }
    out
}

fn write_findings(out_dir: &Path, formats: &[OutFormat], file: &FindingsFile) -> Result<()> {
    let stem = format!("{}_findings", file.source.as_str());
    for fmt in formats.iter().collect::<BTreeSet<_>>() {
        match fmt {
            OutFormat::Json => write_json(&out_dir.join(format!("{stem}.json")), file)?,
            OutFormat::Csv => write_csv(
                &out_dir.join(format!("{stem}.csv")),
                &file.manifest_digest,
                &findings_csv(&file.findings),
            )?,
            OutFormat::Md => {
                let md = render_markdown(&file.findings, file.alpha)?;
                let text = format!("<!-- manifest: {} -->\n\n{md}", file.manifest_digest);
                write_file(&out_dir.join(format!("{stem}.md")), text.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn cmd_bias_dia(a: &DiaArgs) -> Result<()> {
    let mut p = prepare("bias-dia", &a.common)?;
    p.manifest.input("test-embeddings", &a.test_embeddings)?;
    p.manifest.input("probe-embeddings", &a.probe_embeddings)?;
    let (test, removed_test) = load_embeddings(&a.test_embeddings, None)?.without_ids(&p.excluded);
    let (probe, removed_probe) =
        load_embeddings(&a.probe_embeddings, None)?.without_ids(&p.excluded);
    p.manifest.option("excluded_test_samples", removed_test);
    p.manifest.option("excluded_probe_samples", removed_probe);
    let test = test.normalize();
    let probe = probe.normalize();

    let mut outputs = Vec::new();
    for schema in &p.schemas {
        outputs.push(dia_suite(&test, &probe, &p.expressions, schema, &p.cfg)?);
    }
    let digest = p.manifest.finish(&a.common.out_dir)?;
    for out in &outputs {
        write_csv(
            &a.common.out_dir.join(format!("association_{}.csv", out.table.attribute)),
            &digest,
            &out.table.to_csv(),
        )?;
    }
    let file = FindingsFile {
        manifest_digest: digest,
        source: Source::Dia,
        alpha: p.cfg.alpha,
        findings: outputs.into_iter().flat_map(|o| o.findings).collect(),
        dropped: Vec::new(),
        excluded_unknown_group: 0,
        excluded_missing_label: 0,
    };
    write_findings(&a.common.out_dir, &a.common.format, &file)
}

fn without_prediction_ids(set: PredictionSet, excluded: &BTreeSet<String>) -> (PredictionSet, usize) {
    if excluded.is_empty() {
        return (set, 0);
    }
    let keep: Vec<usize> = (0..set.len()).filter(|&i| !excluded.contains(&set.ids[i])).collect();
    let pick = |v: &[String]| keep.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let out = PredictionSet {
        ids: pick(&set.ids),
        true_class: pick(&set.true_class),
        predicted_class: pick(&set.predicted_class),
        attributes: set
            .attributes
            .iter()
            .map(|(n, col)| (n.clone(), keep.iter().map(|&i| col[i].clone()).collect()))
            .collect(),
    };
    let removed = set.len() - keep.len();
    (out, removed)
}

fn cmd_bias_dip(a: &DipArgs) -> Result<()> {
    let mut p = prepare("bias-dip", &a.common)?;
    p.manifest.input("predictions", &a.predictions)?;
    let policy = match a.min_stratum_size {
        None => StratumPolicy::Strict,
        Some(0) => return Err(Error::Invalid("--min-stratum-size must be at least 1".into())),
        Some(k) => StratumPolicy::DropBelow(k),
    };
    p.manifest.option("min_stratum_size", a.min_stratum_size);
    let preds = load_predictions(&a.predictions, &p.expressions)?;
    let (preds, removed) = without_prediction_ids(preds, &p.excluded);
    p.manifest.option("excluded_predictions", removed);

    let mut outputs = Vec::new();
    for schema in &p.schemas {
        outputs.push(dip_suite(&preds, &p.expressions, schema, &p.cfg, policy)?);
    }
    let digest = p.manifest.finish(&a.common.out_dir)?;
    for (schema, out) in p.schemas.iter().zip(&outputs) {
        write_csv(
            &a.common.out_dir.join(format!("strata_{}.csv", schema.name)),
            &digest,
            &strata_csv(&schema.name, &out.strata),
        )?;
    }
    let mut file = FindingsFile {
        manifest_digest: digest,
        source: Source::Dip,
        alpha: p.cfg.alpha,
        findings: Vec::new(),
        dropped: Vec::new(),
        excluded_unknown_group: 0,
        excluded_missing_label: 0,
    };
    for out in outputs {
        file.findings.extend(out.findings);
        file.dropped.extend(out.dropped);
        file.excluded_unknown_group += out.excluded_unknown_group;
        file.excluded_missing_label += out.excluded_missing_label;
    }
    write_findings(&a.common.out_dir, &a.common.format, &file)
}

#[derive(Serialize)]
struct ComparisonFile<'a> {
    manifest_digest: &'a str,
    rows: &'a [ComparisonRow],
    method_avg_bias: &'a AvgBiasResult,
    truth_avg_bias: &'a AvgBiasResult,
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    prepare_out_dir(&a.out_dir)?;
    let mut manifest = RunManifest::new("compare");
    manifest.input("method", &a.method)?;
    manifest.input("truth", &a.truth)?;
    let method = FindingsFile::load(&a.method)?;
    let truth = FindingsFile::load(&a.truth)?;
    let rows = compare_findings(&method.findings, &truth.findings)?;
    let excluded = Exclusions::from_rows(&rows);
    let method_avg = avg_bias(&method.findings, &excluded)?;
    let truth_avg = avg_bias(&truth.findings, &excluded)?;
    manifest.option("avg_bias_normalization", "per attribute, then across attributes");
    let digest = manifest.finish(&a.out_dir)?;

    let attributes: Vec<&str> = rows.iter().fold(Vec::new(), |mut acc, r| {
        if !acc.contains(&r.attribute.as_str()) {
            acc.push(&r.attribute);
        }
        acc
    });
    for attr in attributes {
        let subset: Vec<ComparisonRow> = rows.iter().filter(|r| r.attribute == attr).cloned().collect();
        write_csv(
            &a.out_dir.join(format!("compare_{attr}.csv")),
            &digest,
            &comparison_csv(&subset),
        )?;
    }
    write_json(
        &a.out_dir.join("comparison.json"),
        &ComparisonFile {
            manifest_digest: &digest,
            rows: &rows,
            method_avg_bias: &method_avg,
            truth_avg_bias: &truth_avg,
        },
    )
}

fn load_all(paths: &[PathBuf], manifest: &mut RunManifest, role: &str) -> Result<Vec<BiasFinding>> {
    let mut out = Vec::new();
    for p in paths {
        manifest.input(role, p)?;
        out.extend(FindingsFile::load(p)?.findings);
    }
    Ok(out)
}

fn exclusions_against(
    findings: &[BiasFinding],
    truth: Option<&[BiasFinding]>,
) -> Result<Exclusions> {
    match truth {
        Some(t) => Ok(Exclusions::from_rows(&compare_findings(findings, t)?)),
        None => Ok(Exclusions::none()),
    }
}

#[derive(Serialize)]
struct NamedAvgBias<'a> {
    run: &'a str,
    #[serde(flatten)]
    result: &'a AvgBiasResult,
}

#[derive(Serialize)]
struct AvgBiasFile<'a> {
    manifest_digest: &'a str,
    normalization: &'static str,
    runs: Vec<NamedAvgBias<'a>>,
}

fn cmd_avgbias(a: &AvgBiasArgs) -> Result<()> {
    prepare_out_dir(&a.out_dir)?;
    let mut manifest = RunManifest::new("avgbias");
    let truth = match &a.truth {
        Some(p) => Some(load_all(std::slice::from_ref(p), &mut manifest, "truth")?),
        None => None,
    };
    let mut runs = Vec::new();
    for spec in &a.runs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("--run expects name=path, got {spec:?}")))?;
        if runs.iter().any(|r: &Run| r.name == name) {
            return Err(Error::Invalid(format!("run {name:?} given twice")));
        }
        let findings = load_all(&[PathBuf::from(path)], &mut manifest, &format!("run:{name}"))?;
        let excluded = exclusions_against(&findings, truth.as_deref())?;
        runs.push(Run {
            name: name.to_string(),
            findings,
            excluded,
        });
    }
    let results = multi_run_compare(&runs)?;
    manifest.option("avg_bias_normalization", "per attribute, then across attributes");
    let digest = manifest.finish(&a.out_dir)?;
    write_csv(&a.out_dir.join("avgbias.csv"), &digest, &runs_csv(&results))?;
    write_json(
        &a.out_dir.join("avgbias.json"),
        &AvgBiasFile {
            manifest_digest: &digest,
            normalization: "per_attribute",
            runs: results
                .iter()
                .map(|(n, r)| NamedAvgBias { run: n, result: r })
                .collect(),
        },
    )
}

/// `start:end:step` or `a,b,c`. Range points are rounded to 1e-9 so that
/// `0.01:0.10:0.01` yields exactly the literals 0.01, 0.02, ..., 0.1.
fn parse_alphas(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Invalid(format!("cannot parse alphas {text:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let alphas = if let Some((start, rest)) = text.split_once(':') {
        let (end, step) = rest.split_once(':').ok_or_else(bad)?;
        let (start, end, step) = (num(start)?, num(end)?, num(step)?);
        if !(step > 0.0 && end >= start) {
            return Err(bad());
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    Ok(alphas)
}

#[derive(Serialize)]
struct SweepFile<'a> {
    manifest_digest: &'a str,
    curve: &'a [AvgBiasResult],
}

fn cmd_alpha_sweep(a: &SweepArgs) -> Result<()> {
    prepare_out_dir(&a.out_dir)?;
    let alphas = parse_alphas(&a.alphas)?;
    let mut manifest = RunManifest::new("alpha-sweep");
    let findings = load_all(&a.findings, &mut manifest, "findings")?;
    let truth = match &a.truth {
        Some(p) => Some(load_all(std::slice::from_ref(p), &mut manifest, "truth")?),
        None => None,
    };
    let excluded = exclusions_against(&findings, truth.as_deref())?;
    let sweep = alpha_sweep(&findings, &alphas, &excluded)?;
    manifest.option("alphas", &alphas);
    let digest = manifest.finish(&a.out_dir)?;
    write_csv(&a.out_dir.join("alpha_sweep.csv"), &digest, &sweep_csv(&sweep))?;
    write_json(
        &a.out_dir.join("alpha_sweep.json"),
        &SweepFile {
            manifest_digest: &digest,
            curve: &sweep.curve,
        },
    )
}

#[derive(Serialize)]
struct ScenarioFile<'a> {
    manifest_digest: &'a str,
    anchor_cosines: &'a [AnchorCosine],
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    prepare_out_dir(&a.out_dir)?;
    let mut manifest = RunManifest::new("synth");
    let parse_err = |p: &Path, e: serde_json::Error| Error::format(p, e.to_string());
    let (data, expressions, schema) = match (&a.spec, a.null) {
        (Some(p), true) => {
            manifest.input("spec", p)?;
            let text = fs::read(p).map_err(|e| Error::io(p, e))?;
            let mut spec: NullSpec = serde_json::from_slice(&text).map_err(|e| parse_err(p, e))?;
            spec.seed = a.seed;
            manifest.option("null_spec", &spec);
            (gen_null(&spec)?, spec.expressions, spec.attribute)
        }
        (None, true) => return Err(Error::Invalid("--null needs --spec".into())),
        (spec_path, false) => {
            let mut spec = match spec_path {
                Some(p) => {
                    manifest.input("spec", p)?;
                    let text = fs::read(p).map_err(|e| Error::io(p, e))?;
                    serde_json::from_slice(&text).map_err(|e| parse_err(p, e))?
                }
                None => ScenarioSpec::demo(a.seed),
            };
            spec.seed = a.seed;
            manifest.option("spec", &spec);
            (gen_biased(&spec)?, spec.expressions, spec.attribute)
        }
    };
    let (format, ext) = match a.embedding_format {
        EmbeddingFormatArg::Binary => (EmbeddingFormat::Binary, "febe"),
        EmbeddingFormatArg::Csv => (EmbeddingFormat::Csv, "csv"),
    };
    write_embeddings(&a.out_dir.join(format!("test_embeddings.{ext}")), &data.test, format)?;
    write_embeddings(&a.out_dir.join(format!("probe_embeddings.{ext}")), &data.probe, format)?;
    write_predictions(&a.out_dir.join("predictions.csv"), &data.predictions)?;
    write_name_list(&a.out_dir.join("expressions.txt"), &expressions)?;
    write_name_list(&a.out_dir.join(format!("{}.txt", schema.name)), &schema.groups)?;
    let digest = manifest.finish(&a.out_dir)?;
    write_json(
        &a.out_dir.join("scenario.json"),
        &ScenarioFile {
            manifest_digest: &digest,
            anchor_cosines: &data.anchor_cosines,
        },
    )
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    prepare_out_dir(&a.out_dir)?;
    let mut manifest = RunManifest::new("report");
    let mut findings = Vec::new();
    let mut alpha = None;
    let mut sources = Vec::new();
    for p in &a.findings {
        manifest.input("findings", p)?;
        let f = FindingsFile::load(p)?;
        match alpha {
            Some(x) if x != f.alpha => {
                return Err(Error::Mismatch(format!(
                    "{}: alpha {} differs from {x}",
                    p.display(),
                    f.alpha
                )))
            }
            _ => alpha = Some(f.alpha),
        }
        sources.push(f.manifest_digest);
        findings.extend(f.findings);
    }
    let alpha = alpha.ok_or_else(|| Error::Invalid("no findings files".into()))?;
    let md = render_markdown(&findings, alpha)?;
    let digest = manifest.finish(&a.out_dir)?;
    let text = format!(
        "<!-- manifest: {digest}; findings manifests: {} -->\n\n{md}",
        sources.join(", ")
    );
    write_file(&a.out_dir.join("report.md"), text.as_bytes())?;
    print!("{md}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> Result<()> {
        let cli = Cli::try_parse_from(std::iter::once("febias").chain(args.iter().copied()))
            .expect("arguments parse");
        execute(cli)
    }

    fn p(dir: &Path, name: &str) -> String {
        dir.join(name).to_string_lossy().into_owned()
    }

    fn synth(dir: &Path) {
        let spec = ScenarioSpec {
            test_per_expression: 40,
            probe_per_group: 50,
            predictions_per_cell: 30,
            ..ScenarioSpec::demo(0)
        };
        let spec_path = dir.join("spec.json");
        fs::write(&spec_path, serde_json::to_vec(&spec).unwrap()).unwrap();
        call(&["synth", "--seed", "3", "--spec", &p(dir, "spec.json"), "--out-dir", &p(dir, "syn")])
            .unwrap();
    }

    fn dia_args<'a>(dir: &'a Path, out: &'a str) -> Vec<String> {
        let syn = dir.join("syn");
        [
            "bias-dia",
            "--test-embeddings",
            &p(&syn, "test_embeddings.febe"),
            "--probe-embeddings",
            &p(&syn, "probe_embeddings.febe"),
            "--attribute",
            &p(&syn, "gender.txt"),
            "--expressions",
            &p(&syn, "expressions.txt"),
            "--b",
            "100",
            "--alpha",
            "0.05",
            "--seed",
            "7",
            "--format",
            "json",
            "--format",
            "csv",
            "--out-dir",
            &p(dir, out),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn call_owned(args: &[String]) -> Result<()> {
        call(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }

    #[test]
    fn alpha_grid() {
        let a = parse_alphas("0.01:0.10:0.01").unwrap();
        let expected: Vec<f64> = (1..=10).map(|k| k as f64 / 100.0).collect();
        assert_eq!(a, expected);
        assert_eq!(parse_alphas("0.05, 0.1").unwrap(), vec![0.05, 0.1]);
        assert!(parse_alphas("0.1:0.01:0.01").is_err());
        assert!(parse_alphas("x").is_err());
    }

    #[test]
    fn bad_arguments_exit_one() {
        assert_eq!(run(["febias", "bias-dia"]), 1);
        assert_eq!(run(["febias", "--help"]), 0);
    }

    #[test]
    fn synth_then_dia_is_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        synth(dir);
        call_owned(&dia_args(dir, "a")).unwrap();
        call_owned(&dia_args(dir, "b")).unwrap();
        for f in ["dia_findings.json", "dia_findings.csv", "manifest.json", "association_gender.csv"] {
            assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("b").join(f)).unwrap());
        }
        let file = FindingsFile::load(&dir.join("a/dia_findings.json")).unwrap();
        assert_eq!(file.findings.len(), 7);
        assert!(file.findings.iter().all(|f| f.entries.len() == 1));
        let manifest = fs::read(dir.join("a/manifest.json")).unwrap();
        assert_eq!(file.manifest_digest, hex::encode(Sha256::digest(&manifest)));
        let csv = fs::read_to_string(dir.join("a/dia_findings.csv")).unwrap();
        assert!(csv.starts_with(&format!("# manifest: {}\n", file.manifest_digest)));
    }

    #[test]
    fn missing_probe_file_names_the_path() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        synth(dir);
        let mut args = dia_args(dir, "out");
        args[4] = p(dir, "nope.febe");
        let err = call_owned(&args).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("nope.febe"));
    }

    fn toy_predictions(dir: &Path) {
        let mut text = String::from("id,true,pred,race\n");
        let mut k = 0;
        for e in ["anger", "neutral"] {
            for (g, n, correct) in [("W", 25, 20), ("B", 25, 12), ("A", 2, 1)] {
                for i in 0..n {
                    let pred = if i < correct { e } else if e == "anger" { "neutral" } else { "anger" };
                    text.push_str(&format!("s{k},{e},{pred},{g}\n"));
                    k += 1;
                }
            }
        }
        fs::write(dir.join("preds.csv"), text).unwrap();
        fs::write(dir.join("race.txt"), "W\nB\nA\n").unwrap();
        fs::write(dir.join("gender.txt"), "F\nM\n").unwrap();
        fs::write(dir.join("expr.txt"), "anger\nneutral\n").unwrap();
    }

    fn dip_args(dir: &Path, attribute: &str, out: &str, extra: &[&str]) -> Vec<String> {
        let mut v: Vec<String> = [
            "bias-dip",
            "--predictions",
            &p(dir, "preds.csv"),
            "--attribute",
            &p(dir, attribute),
            "--expressions",
            &p(dir, "expr.txt"),
            "--seed",
            "1",
            "--b",
            "500",
            "--out-dir",
            &p(dir, out),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    }

    #[test]
    fn dip_policies_and_missing_column() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        toy_predictions(dir);
        let err = call_owned(&dip_args(dir, "gender.txt", "g", &[])).unwrap_err();
        assert_eq!(err.exit_code(), 1);

        call_owned(&dip_args(dir, "race.txt", "d", &["--min-stratum-size", "20"])).unwrap();
        let file = FindingsFile::load(&dir.join("d/dip_findings.json")).unwrap();
        assert_eq!(file.dropped.len(), 2);
        assert!(file.dropped.iter().all(|d| d.group == "A" && d.n == 2));
        let anger = &file.findings[0];
        assert_eq!(anger.reference_group, "W");
        assert_eq!(anger.entries.len(), 1);
        assert!((anger.entries[0].observed - 0.32).abs() < 1e-12);
        assert!(anger.entries[0].validated > 0.0);

        // strict policy still accepts non-empty tiny strata
        call_owned(&dip_args(dir, "race.txt", "s", &[])).unwrap();
        let strict = FindingsFile::load(&dir.join("s/dip_findings.json")).unwrap();
        assert_eq!(strict.findings[0].entries.len(), 2);
    }

    #[test]
    fn compare_sweep_avgbias_report() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        toy_predictions(dir);
        call_owned(&dip_args(dir, "race.txt", "d", &["--min-stratum-size", "20"])).unwrap();
        let f = p(dir, "d/dip_findings.json");

        call(&["compare", "--method", &f, "--truth", &f, "--out-dir", &p(dir, "c")]).unwrap();
        let csv = fs::read_to_string(dir.join("c/compare_race.csv")).unwrap();
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.ends_with(",0.00,true")));

        call(&["alpha-sweep", "--findings", &f, "--out-dir", &p(dir, "w")]).unwrap();
        let sweep = fs::read_to_string(dir.join("w/alpha_sweep.csv")).unwrap();
        assert_eq!(sweep.lines().count(), 12);
        assert!(sweep.lines().nth(2).unwrap().starts_with("0.01,"));
        assert!(sweep.lines().last().unwrap().starts_with("0.10,"));

        let run_a = format!("a={f}");
        let run_b = format!("b={f}");
        call(&["avgbias", "--run", &run_a, "--run", &run_b, "--out-dir", &p(dir, "v")]).unwrap();
        let avg = fs::read_to_string(dir.join("v/avgbias.csv")).unwrap();
        let vals: Vec<&str> = avg.lines().skip(2).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(vals.len(), 2);
        assert_eq!(vals[0], vals[1]);

        call(&["report", "--findings", &f, "--out-dir", &p(dir, "r")]).unwrap();
        let md = fs::read_to_string(dir.join("r/report.md")).unwrap();
        assert!(md.contains("| anger | W → B |"));
    }
}
