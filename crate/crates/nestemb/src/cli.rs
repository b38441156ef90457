//! The `nestemb` command line.
//!
//! Values resolve as flag > `--config` file (`key=value` lines, keys are the
//! long flag names) > preset > built-in default. Exit codes: 0 success,
//! 1 runtime or data error, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nestemb_core::dataset::{
    deterministic_split, make_synthetic_triplets, synthetic_corpus, synthetic_scored_pairs,
    validate_counts, Schema, SplitCounts, SplitExpectation, SyntheticLanguage, SyntheticVocab,
};
use nestemb_core::encoder::{train, AdamConfig};
use nestemb_core::retrieval::{exact_knn, funnel_search, recall_at_k, Corpus, FunnelConfig};
use nestemb_core::{
    evaluator, DimensionLadder, EncoderModel, FeaturizerConfig, SimilarityMetric, TrainConfig,
};
use serde_json::{json, Value};

use crate::data::{self, ParseOptions, Rows};
use crate::format;
use crate::report;
use crate::service;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(msg: impl Display) -> CliError {
    CliError::Usage(msg.to_string())
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "nestemb",
    version,
    about = "Nested embedding training, evaluation, retrieval and serving"
)]
pub struct Cli {
    /// Print the resolved configuration before running.
    #[arg(long, global = true)]
    verbose: bool,
    /// key=value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an encoder on a triplet CSV.
    Train(TrainArgs),
    /// Correlation report over a scored-pair CSV.
    Eval(EvalArgs),
    /// Encode an `id,text` CSV into a corpus file.
    Index(IndexArgs),
    /// Funnel search over a corpus file.
    Search(SearchArgs),
    /// Dataset validation, generation and splitting.
    #[command(subcommand)]
    Data(DataCommand),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Preset as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    triplets: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// desk: ladder 256,128,64,32. paper: ladder 768,512,256,128,64.
    #[arg(long)]
    preset: Option<Preset>,
    /// Full dimension; the ladder halves down to 32.
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated, strictly descending.
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    max_chars: Option<usize>,
    /// log2 of the hashed feature space.
    #[arg(long)]
    feature_bits: Option<u8>,
    #[arg(long)]
    ngram_min: Option<u8>,
    #[arg(long)]
    ngram_max: Option<u8>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// JSON report path; the CSV table goes next to it with a .csv extension.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Subset of the model ladder, comma-separated.
    #[arg(long)]
    dims: Option<String>,
    /// pair-score (gold in [0,1]) or sts (raw gold, see --score-range).
    #[arg(long)]
    schema: Option<String>,
    /// Raw gold range as lo,hi.
    #[arg(long)]
    score_range: Option<String>,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    shortlist_dim: Option<usize>,
    #[arg(long)]
    shortlist_size: Option<usize>,
    #[arg(long)]
    final_dim: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    metric: Option<String>,
    /// Also run exact search and print recall@k.
    #[arg(long)]
    with_exact: bool,
}

#[derive(Subcommand, Debug)]
enum DataCommand {
    /// Parse a file (or a directory of train/validation/test CSVs) and report counts.
    Validate(ValidateArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Split a CSV into train/validation/test files.
    Split(SplitArgs),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    schema: Option<String>,
    #[arg(long, conflicts_with = "split_dir")]
    input: Option<PathBuf>,
    /// Directory holding train.csv, validation.csv and test.csv.
    #[arg(long)]
    split_dir: Option<PathBuf>,
    /// Compare split sizes with the published subset sizes.
    #[arg(long)]
    expect_published: bool,
    /// Quarantine bad rows instead of failing.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    score_range: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum SynthKind {
    Triplets,
    Pairs,
    Docs,
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <SynthKind as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    kind: Option<SynthKind>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<usize>,
    /// Triplets per cluster.
    #[arg(long)]
    per_cluster: Option<usize>,
    /// Number of pairs or documents.
    #[arg(long)]
    count: Option<usize>,
    /// Same seed gives the same vocabulary across kinds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    schema: Option<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// train,validation,test
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    body_limit: Option<usize>,
}

/// `key=value` settings from `--config`.
struct Resolver {
    values: BTreeMap<String, String>,
}

impl Resolver {
    fn load(path: Option<&Path>, allowed: &[&str]) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        let Some(path) = path else {
            return Ok(Self { values });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                usage(format!("{}:{}: expected key=value", path.display(), n + 1))
            })?;
            let key = key.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                return Err(usage(format!(
                    "{}:{}: unknown key {key:?} (allowed: {})",
                    path.display(),
                    n + 1,
                    allowed.join(", ")
                )));
            }
            values.insert(key, value.trim().to_owned());
        }
        Ok(Self { values })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| usage(format!("config {key}={v}: {e}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.get(flag, key)?
            .ok_or_else(|| usage(format!("missing required --{key}")))
    }
}

fn parse_pair(s: &str, what: &str) -> CliResult<(f64, f64)> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| usage(format!("{what} must look like lo,hi")))?;
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|e| usage(format!("{what}: {e}")))
    };
    Ok((num(lo)?, num(hi)?))
}

fn parse_schema(s: &str) -> CliResult<Schema> {
    s.parse().map_err(usage)
}

fn report_config(verbose: bool, config: &Value) {
    if verbose {
        eprintln!(
            "resolved config: {}",
            serde_json::to_string_pretty(config).unwrap()
        );
    }
}

fn write_json(path: &Path, value: &Value) -> CliResult {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_model(path: &Path) -> CliResult<EncoderModel> {
    Ok(format::load_model(path)?)
}

/// Path of the JSON training report written next to `model`.
pub fn train_report_path(model: &Path) -> PathBuf {
    model.with_extension("report.json")
}

fn cmd_train(args: TrainArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let triplets_path: PathBuf = cfg.required(args.triplets, "triplets")?;
    let out: PathBuf = cfg.required(args.out, "out")?;
    let preset = cfg.or(args.preset, "preset", Preset::Desk)?;
    let preset_ladder = match preset {
        Preset::Desk => DimensionLadder::desk_default(),
        Preset::Paper => DimensionLadder::wide_default(),
    };
    let dim: Option<usize> = cfg.get(args.dim, "dim")?;
    let ladder = match (cfg.get(args.ladder, "ladder")?, dim) {
        (Some(l), d) => {
            let l: DimensionLadder = l.parse().map_err(usage)?;
            if d.is_some_and(|d| d != l.full_dim()) {
                return Err(usage(format!(
                    "--dim {} disagrees with --ladder {l}",
                    d.unwrap()
                )));
            }
            l
        }
        (None, Some(d)) => DimensionLadder::halving(d, d.min(32)).map_err(usage)?,
        (None, None) => preset_ladder,
    };
    let defaults = TrainConfig::default();
    let featurizer = FeaturizerConfig {
        n_min: cfg.or(
            args.ngram_min,
            "ngram-min",
            FeaturizerConfig::default().n_min,
        )?,
        n_max: cfg.or(
            args.ngram_max,
            "ngram-max",
            FeaturizerConfig::default().n_max,
        )?,
        feature_bits: cfg.or(
            args.feature_bits,
            "feature-bits",
            FeaturizerConfig::default().feature_bits,
        )?,
    };
    featurizer.validate().map_err(usage)?;
    let config = TrainConfig {
        batch_size: cfg.or(args.batch, "batch", defaults.batch_size)?,
        epochs: cfg.or(args.epochs, "epochs", defaults.epochs)?,
        learning_rate: cfg.or(args.lr, "lr", defaults.learning_rate)?,
        scale: cfg.or(args.scale, "scale", defaults.scale)?,
        ladder: Some(ladder.clone()),
        loss_weights: None,
        max_chars: cfg.or(args.max_chars, "max-chars", defaults.max_chars)?,
        seed: cfg.or(args.seed, "seed", defaults.seed)?,
        adam: AdamConfig::default(),
    };
    config.validate().map_err(usage)?;
    if !(config.learning_rate > 0.0) {
        return Err(usage("--lr must be positive"));
    }
    let resolved = json!({
        "command": "train",
        "triplets": triplets_path,
        "out": out,
        "preset": format!("{preset:?}").to_lowercase(),
        "ladder": ladder.dims(),
        "batch": config.batch_size,
        "epochs": config.epochs,
        "lr": config.learning_rate,
        "scale": config.scale,
        "max_chars": config.max_chars,
        "seed": config.seed,
        "ngram_min": featurizer.n_min,
        "ngram_max": featurizer.n_max,
        "feature_bits": featurizer.feature_bits,
        "loss_weights": "uniform",
        "adam": { "beta1": config.adam.beta1, "beta2": config.adam.beta2, "eps": config.adam.eps },
    });
    report_config(verbose, &resolved);

    let rows = data::parse_csv(&triplets_path, Schema::Triplet, &ParseOptions::default())?
        .rows
        .into_triplets()
        .expect("triplet schema");
    let init = EncoderModel::init(ladder, featurizer, config.seed)?;
    let start = Instant::now();
    let (model, mut train_report) = train(init, &rows, &config)?;
    train_report.duration_ms = Some(start.elapsed().as_millis() as u64);

    format::save_model(&model, &out)?;
    let report_path = train_report_path(&out);
    write_json(&report_path, &report::train_json(&train_report, resolved))?;
    println!(
        "trained on {} triplets in {} batches: first batch loss {:.4}, final epoch mean {:.4}",
        rows.len(),
        train_report.batch_losses.len(),
        train_report.batch_losses[0],
        train_report.epoch_mean_losses.last().unwrap()
    );
    for (dim, acc) in &train_report.final_accuracy {
        println!("  train accuracy @{dim}: {acc:.4}");
    }
    println!(
        "model: {}\nreport: {}",
        out.display(),
        report_path.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let model_path: PathBuf = cfg.required(args.model, "model")?;
    let pairs_path: PathBuf = cfg.required(args.pairs, "pairs")?;
    let out: PathBuf = cfg.required(args.out, "out")?;
    let schema = parse_schema(&cfg.or(args.schema, "schema", "pair-score".to_owned())?)?;
    if !matches!(schema, Schema::PairScore | Schema::Sts) {
        return Err(usage("--schema must be pair-score or sts"));
    }
    let score_range = cfg
        .get(args.score_range, "score-range")?
        .map(|s: String| parse_pair(&s, "--score-range"))
        .transpose()?;
    let dims: Option<DimensionLadder> = cfg
        .get(args.dims, "dims")?
        .map(|s: String| s.parse().map_err(usage))
        .transpose()?;
    let model = load_model(&model_path)?;
    let ladder = match dims {
        Some(d) => {
            if let Some(bad) = d.iter().find(|m| !model.ladder().contains(*m)) {
                return Err(usage(format!(
                    "dimension {bad} is not in the model ladder {}",
                    model.ladder()
                )));
            }
            d
        }
        None => model.ladder().clone(),
    };
    let resolved = json!({
        "command": "eval",
        "model": model_path,
        "model_fingerprint": format::fingerprint_hex(&format::model_fingerprint(&model)),
        "pairs": pairs_path,
        "schema": schema.name(),
        "score_range": score_range.map(|(lo, hi)| vec![lo, hi]),
        "dims": ladder.dims(),
        "metrics": SimilarityMetric::ALL.iter().map(|m| m.name()).collect::<Vec<_>>(),
    });
    report_config(verbose, &resolved);

    let opts = ParseOptions {
        lenient: false,
        score_range,
    };
    let pairs = data::parse_csv(&pairs_path, schema, &opts)?
        .rows
        .into_scored()
        .expect("scored schema");
    let corr = evaluator::evaluate(&model, &pairs, &ladder)?;
    write_json(&out, &report::correlation_json(&corr, resolved))?;
    let csv = report::correlation_csv(&corr);
    let csv_path = out.with_extension("csv");
    std::fs::write(&csv_path, &csv).with_context(|| format!("writing {}", csv_path.display()))?;
    print!("{csv}");
    Ok(())
}

fn cmd_index(args: IndexArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let model_path: PathBuf = cfg.required(args.model, "model")?;
    let docs_path: PathBuf = cfg.required(args.docs, "docs")?;
    let out: PathBuf = cfg.required(args.out, "out")?;
    report_config(
        verbose,
        &json!({ "command": "index", "model": model_path, "docs": docs_path, "out": out }),
    );
    let model = load_model(&model_path)?;
    let docs = data::parse_documents(&docs_path)?;
    let rows = docs
        .into_iter()
        .map(|(id, text)| Ok((id, model.encode(&text, model.dim())?)))
        .collect::<nestemb_core::Result<Vec<_>>>()?;
    let corpus = Corpus::from_rows(rows, format::model_fingerprint(&model))?;
    format::save_corpus(&corpus, &out)?;
    println!(
        "indexed {} documents at d = {} into {}",
        corpus.len(),
        corpus.dim(),
        out.display()
    );
    Ok(())
}

fn cmd_search(args: SearchArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let model_path: PathBuf = cfg.required(args.model, "model")?;
    let corpus_path: PathBuf = cfg.required(args.corpus, "corpus")?;
    let query: String = cfg.required(args.query, "query")?;
    let metric: SimilarityMetric = cfg
        .or(args.metric, "metric", "cosine".to_owned())?
        .parse()
        .map_err(usage)?;
    let model = load_model(&model_path)?;
    let funnel = FunnelConfig {
        shortlist_dim: cfg.or(
            args.shortlist_dim,
            "shortlist-dim",
            model.ladder().min_dim(),
        )?,
        shortlist_size: cfg.or(args.shortlist_size, "shortlist-size", 200)?,
        final_dim: cfg.or(args.final_dim, "final-dim", model.dim())?,
        k: cfg.or(args.k, "k", 10)?,
    };
    let with_exact = args.with_exact || cfg.or(None, "with-exact", false)?;
    report_config(
        verbose,
        &json!({
            "command": "search", "model": model_path, "corpus": corpus_path, "query": query,
            "metric": metric.name(), "shortlist_dim": funnel.shortlist_dim,
            "shortlist_size": funnel.shortlist_size, "final_dim": funnel.final_dim, "k": funnel.k,
            "with_exact": with_exact,
        }),
    );
    let corpus = format::load_corpus(&corpus_path)?;
    let fp = format::model_fingerprint(&model);
    if corpus.fingerprint() != fp {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "corpus was built with model {}, but {} is {}",
            format::fingerprint_hex(&corpus.fingerprint()),
            model_path.display(),
            format::fingerprint_hex(&fp)
        )));
    }
    funnel.validate(&corpus).map_err(usage)?;
    let q = model.encode(&query, model.dim())?;
    let result = funnel_search(&q, &corpus, &funnel, metric)?;
    if result.truncated {
        eprintln!(
            "warning: k = {} exceeds the corpus size {}; returning {} results",
            funnel.k,
            corpus.len(),
            result.hits.len()
        );
    }
    for (rank, hit) in result.hits.iter().enumerate() {
        println!("{}\t{}\t{}", rank + 1, hit.id, hit.score);
    }
    if with_exact {
        let exact = exact_knn(&q, &corpus, funnel.final_dim, metric, funnel.k)?;
        let k = funnel.k.min(result.hits.len()).min(exact.hits.len());
        println!("recall@{k}: {}", recall_at_k(&result, &exact, k)?);
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let schema = parse_schema(&cfg.required(args.schema, "schema")?)?;
    let input: Option<PathBuf> = cfg.get(args.input, "input")?;
    let split_dir: Option<PathBuf> = cfg.get(args.split_dir, "split-dir")?;
    let lenient = args.lenient || cfg.or(None, "lenient", false)?;
    let expect_published = args.expect_published || cfg.or(None, "expect-published", false)?;
    let score_range = cfg
        .get(args.score_range, "score-range")?
        .map(|s: String| parse_pair(&s, "--score-range"))
        .transpose()?;
    let opts = ParseOptions {
        lenient,
        score_range,
    };
    report_config(
        verbose,
        &json!({ "command": "data validate", "schema": schema.name(), "input": input, "split_dir": split_dir,
                 "lenient": lenient, "expect_published": expect_published }),
    );

    let parse = |path: &Path| -> CliResult<usize> {
        let parsed = data::parse_csv(path, schema, &opts)?;
        for q in &parsed.quarantine {
            eprintln!(
                "{}: quarantined line {}: {}",
                path.display(),
                q.line,
                q.message
            );
        }
        println!(
            "{}: {} rows valid under {} schema ({} quarantined)",
            path.display(),
            parsed.rows.len(),
            schema,
            parsed.quarantine.len()
        );
        Ok(parsed.rows.len())
    };
    match (input, split_dir) {
        (Some(path), None) => {
            parse(&path)?;
            Ok(())
        }
        (None, Some(dir)) => {
            let counts = SplitCounts {
                train: parse(&dir.join("train.csv"))?,
                validation: parse(&dir.join("validation.csv"))?,
                test: parse(&dir.join("test.csv"))?,
            };
            let expected = if expect_published {
                schema.published_counts()
            } else {
                SplitExpectation::default()
            };
            let check = validate_counts(counts, &expected);
            for c in &check.checks {
                let verdict = match c.pass {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "-",
                };
                let want = c
                    .expected
                    .map(|e| format!("{}±{}", e.count, e.tolerance))
                    .unwrap_or_else(|| "n/a".into());
                println!(
                    "{:<10} actual {:>8} expected {:>12} {verdict}",
                    c.split, c.actual, want
                );
            }
            if check.passed() {
                Ok(())
            } else {
                let failed: Vec<&str> = check.failures().map(|c| c.split).collect();
                Err(CliError::Runtime(anyhow::anyhow!(
                    "split counts off for {}",
                    failed.join(", ")
                )))
            }
        }
        _ => Err(usage("give exactly one of --input or --split-dir")),
    }
}

fn cmd_synth(args: SynthArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let kind = cfg.or(args.kind, "kind", SynthKind::Triplets)?;
    let out: PathBuf = cfg.required(args.out, "out")?;
    let clusters = cfg.or(args.clusters, "clusters", 8)?;
    let per_cluster = cfg.or(args.per_cluster, "per-cluster", 250)?;
    let count = cfg.or(args.count, "count", 400)?;
    let seed = cfg.or(args.seed, "seed", 7)?;
    report_config(
        verbose,
        &json!({ "command": "data synth", "kind": format!("{kind:?}").to_lowercase(), "out": out,
                 "clusters": clusters, "per_cluster": per_cluster, "count": count, "seed": seed }),
    );
    let lang = SyntheticLanguage::new(clusters, SyntheticVocab::default(), seed).map_err(usage)?;
    let file =
        std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let writer = std::io::BufWriter::new(file);
    let n = match kind {
        SynthKind::Triplets => {
            let rows = make_synthetic_triplets(clusters, per_cluster, seed).map_err(usage)?;
            let n = rows.len();
            data::write_csv(&Rows::Triplet(rows), writer)?;
            n
        }
        SynthKind::Pairs => {
            let rows = synthetic_scored_pairs(&lang, count, seed.wrapping_add(2));
            let n = rows.len();
            data::write_csv(&Rows::Scored(rows), writer)?;
            n
        }
        SynthKind::Docs => {
            let (docs, _) = synthetic_corpus(&lang, count, 0, seed.wrapping_add(3));
            data::write_documents(&docs, writer)?;
            docs.len()
        }
    };
    println!("wrote {n} rows to {}", out.display());
    Ok(())
}

fn cmd_split(args: SplitArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let schema = parse_schema(&cfg.required(args.schema, "schema")?)?;
    let input: PathBuf = cfg.required(args.input, "input")?;
    let out_dir: PathBuf = cfg.required(args.out_dir, "out-dir")?;
    let fractions_raw = cfg.or(args.fractions, "fractions", "0.8,0.1,0.1".to_owned())?;
    let seed = cfg.or(args.seed, "seed", 42)?;
    let fractions: Vec<f64> = fractions_raw
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--fractions: {e}")))?;
    let fractions: [f64; 3] = fractions
        .try_into()
        .map_err(|_| usage("--fractions needs three values"))?;
    // Checked up front so a bad split is a usage error even before parsing.
    deterministic_split(&[(); 0], fractions, seed).map_err(usage)?;
    report_config(
        verbose,
        &json!({ "command": "data split", "schema": schema.name(), "input": input, "out_dir": out_dir,
                 "fractions": fractions, "seed": seed }),
    );
    let rows = data::parse_csv(&input, schema, &ParseOptions::default())?.rows;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fn split_rows<T: Clone>(
        rows: &[T],
        fractions: [f64; 3],
        seed: u64,
        wrap: fn(Vec<T>) -> Rows,
    ) -> CliResult<[Rows; 3]> {
        let s = deterministic_split(rows, fractions, seed)?;
        Ok([wrap(s.train), wrap(s.validation), wrap(s.test)])
    }
    let parts = match rows {
        Rows::Pair(r) => split_rows(&r, fractions, seed, Rows::Pair)?,
        Rows::Triplet(r) => split_rows(&r, fractions, seed, Rows::Triplet)?,
        Rows::PairClass(r) => split_rows(&r, fractions, seed, Rows::PairClass)?,
        Rows::Scored(r) => split_rows(&r, fractions, seed, Rows::Scored)?,
    };
    for (name, part) in ["train", "validation", "test"].iter().zip(&parts) {
        let path = out_dir.join(format!("{name}.csv"));
        data::write_csv_file(part, &path)?;
        println!("{name}: {} rows -> {}", part.len(), path.display());
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs, cfg: &Resolver, verbose: bool) -> CliResult {
    let models_dir: PathBuf = cfg.required(args.models, "models")?;
    let listen = cfg.or(args.listen, "listen", service::DEFAULT_LISTEN.to_owned())?;
    let body_limit = cfg.or(args.body_limit, "body-limit", service::DEFAULT_BODY_LIMIT)?;
    let addr: SocketAddr = listen
        .parse()
        .map_err(|e| usage(format!("bad listen address {listen:?}: {e}")))?;
    if !models_dir.is_dir() {
        return Err(usage(format!(
            "model directory {} does not exist",
            models_dir.display()
        )));
    }
    report_config(
        verbose,
        &json!({ "command": "serve", "models": models_dir, "listen": listen, "body_limit": body_limit }),
    );
    let models = service::load_models_dir(&models_dir)?;
    let state = Arc::new(service::AppState::new(models));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| usage(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr()?;
        tracing::info!(%local, "listening");
        println!("listening on {local}");
        service::serve(listener, state, body_limit, shutdown_signal()).await?;
        tracing::info!("shut down");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

const TRAIN_KEYS: &[&str] = &[
    "triplets",
    "out",
    "preset",
    "dim",
    "ladder",
    "batch",
    "epochs",
    "lr",
    "seed",
    "scale",
    "max-chars",
    "feature-bits",
    "ngram-min",
    "ngram-max",
];
const EVAL_KEYS: &[&str] = &["model", "pairs", "out", "dims", "schema", "score-range"];
const INDEX_KEYS: &[&str] = &["model", "docs", "out"];
const SEARCH_KEYS: &[&str] = &[
    "model",
    "corpus",
    "query",
    "shortlist-dim",
    "shortlist-size",
    "final-dim",
    "k",
    "metric",
    "with-exact",
];
const VALIDATE_KEYS: &[&str] = &[
    "schema",
    "input",
    "split-dir",
    "expect-published",
    "lenient",
    "score-range",
];
const SYNTH_KEYS: &[&str] = &["kind", "out", "clusters", "per-cluster", "count", "seed"];
const SPLIT_KEYS: &[&str] = &["schema", "input", "out-dir", "fractions", "seed"];
const SERVE_KEYS: &[&str] = &["models", "listen", "body-limit"];

pub fn run(cli: Cli) -> CliResult {
    let path = cli.config.as_deref();
    let v = cli.verbose;
    match cli.command {
        Command::Train(a) => cmd_train(a, &Resolver::load(path, TRAIN_KEYS)?, v),
        Command::Eval(a) => cmd_eval(a, &Resolver::load(path, EVAL_KEYS)?, v),
        Command::Index(a) => cmd_index(a, &Resolver::load(path, INDEX_KEYS)?, v),
        Command::Search(a) => cmd_search(a, &Resolver::load(path, SEARCH_KEYS)?, v),
        Command::Data(DataCommand::Validate(a)) => {
            cmd_validate(a, &Resolver::load(path, VALIDATE_KEYS)?, v)
        }
        Command::Data(DataCommand::Synth(a)) => cmd_synth(a, &Resolver::load(path, SYNTH_KEYS)?, v),
        Command::Data(DataCommand::Split(a)) => cmd_split(a, &Resolver::load(path, SPLIT_KEYS)?, v),
        Command::Serve(a) => cmd_serve(a, &Resolver::load(path, SERVE_KEYS)?, v),
    }
}

/// Parses arguments, runs, and maps the outcome to the exit-code contract.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.verbose {
        tracing::Level::DEBUG
    } else {
        tracing::Level::INFO
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}
