//! Command-line front end.
//!
//! Settings come from flags, then `--set KEY=VALUE`, then a `--config`
//! file, then built-in defaults, in that order of precedence. `--explain`
//! prints the resolved settings as a config file and exits.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use qpp_core::eval::{evaluate, kendall_columns, sare_table};
use qpp_core::lme::{build_design, select_model};
use qpp_core::predictors::{assemble, compute_row, Failure, InterpolationParams};
use qpp_core::similarity::{adjust_matrix, build_sim_matrix, write_matrix_csv};
use qpp_core::tuning::{
    enumerate_points, evaluate_point, finish, grid_seed, shortest_tuning_ranking, TraceRow,
    DEFAULT_CUTOFFS,
};
use qpp_core::{
    Column, Metric, Predictor, PredictorConfig, PredictorInputs, PredictorSettings, QueryTable,
    ScoredRanking, SimilarityKind, TuningGrid, TuningResult, VectorStore,
};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{read_file, write_file, Error, Result};
use crate::fixture::{generate, FixtureSpec};
use crate::ingest::{
    parse_dense_vectors, parse_qrels, parse_query_types, parse_run, parse_sparse_vectors,
};
use crate::report::{render, selection_json};
use crate::table::{parse_table, write_table, Provenance};

pub const DEFAULT_SEED: u64 = 42;
const ALPHA: f64 = 0.05;

/// Every key a config file may hold; commands ignore keys they do not use.
const CONFIG_KEYS: &[&str] = &[
    "run",
    "qrels",
    "sparse",
    "dense",
    "query_vectors",
    "query_types",
    "strict_types",
    "predictors",
    "predictions",
    "effectiveness",
    "sare",
    "metrics",
    "metric",
    "rel_threshold",
    "k",
    "tau_upper",
    "tau_lower",
    "lambda",
    "rsd_samples",
    "seed",
    "similarity",
    "cutoffs",
    "lambdas",
    "order",
    "trace",
];
const OVERRIDE_PREFIXES: &[&str] = &["k", "tau_upper", "tau_lower", "lambda", "seed"];

#[derive(Debug, Parser)]
#[command(name = "qpp", version, about = "Query performance prediction toolkit")]
pub struct Cli {
    /// Worker threads for per-query work (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Print the resolved settings, defaults included, and exit.
    #[arg(long, global = true)]
    pub explain: bool,
    /// Record the creation time in output headers.
    #[arg(long, global = true)]
    pub stamp: bool,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute predictor values for every query in a run.
    Predict(PredictArgs),
    /// Per-query effectiveness of a run against relevance judgments.
    Evaluate(EvaluateArgs),
    /// Kendall's tau between predictor and effectiveness columns.
    Correlate(CorrelateArgs),
    /// Grid-search predictor hyperparameters; writes a config for `predict`.
    Tune(TuneArgs),
    /// Scaled absolute rank error of every predictor against one metric.
    Sare(SareArgs),
    /// Fit and select mixed-effects models of sARE; writes a JSON report.
    Lme(LmeArgs),
    /// Pairwise similarity matrix of one query's top-k documents, as CSV.
    Simmatrix(SimmatrixArgs),
    /// Write the synthetic test collection to a directory.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Settings file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Extra setting applied over the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Base random seed, recorded in the output header.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VectorArgs {
    /// Sparse document vectors (`id term:weight ...`).
    #[arg(long, value_name = "FILE")]
    pub sparse: Option<PathBuf>,
    /// Dense document vectors (`dim D` header, then `id v1 .. vD`).
    #[arg(long, value_name = "FILE")]
    pub dense: Option<PathBuf>,
    /// Dense query vectors, same format as --dense.
    #[arg(long, value_name = "FILE")]
    pub query_vectors: Option<PathBuf>,
    /// Similarity between document vectors: inner or cosine.
    #[arg(long)]
    pub similarity: Option<Similarity>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub vectors: VectorArgs,
    /// TREC run file.
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,
    /// Comma-separated predictor names (default: all the inputs allow).
    #[arg(long)]
    pub predictors: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau_upper: Option<usize>,
    #[arg(long)]
    pub tau_lower: Option<usize>,
    /// Interpolation weight of the coherence component.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub rsd_samples: Option<usize>,
    /// Write the table and exit 0 even if some values could not be computed.
    #[arg(long)]
    pub keep_going: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub qrels: Option<PathBuf>,
    /// Comma-separated metrics such as NDCG@10,MAP@100,MRR@10.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Minimum grade counted as relevant by MAP and MRR.
    #[arg(long)]
    pub rel_threshold: Option<u32>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Predictor table written by `predict`.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Effectiveness table written by `evaluate`.
    #[arg(long, value_name = "FILE")]
    pub effectiveness: Option<PathBuf>,
    /// One metric column; all metrics when omitted.
    #[arg(long)]
    pub metric: Option<String>,
    /// One predictor column; all predictors when omitted.
    #[arg(long)]
    pub predictor: Option<String>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,
    /// Judgments used to compute the target metric.
    #[arg(long, value_name = "FILE", conflicts_with = "effectiveness")]
    pub qrels: Option<PathBuf>,
    /// Precomputed effectiveness table, instead of --qrels.
    #[arg(long, value_name = "FILE")]
    pub effectiveness: Option<PathBuf>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub rel_threshold: Option<u32>,
    #[arg(long)]
    pub predictors: Option<String>,
    /// Comma-separated ascending cutoffs.
    #[arg(long)]
    pub cutoffs: Option<String>,
    /// Comma-separated interpolation weights.
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub rsd_samples: Option<usize>,
    /// Also write every grid point and its tau as TSV.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub effectiveness: Option<PathBuf>,
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Debug, Args)]
pub struct LmeArgs {
    #[command(flatten)]
    pub common: Common,
    /// sARE table written by `sare`.
    #[arg(long, value_name = "FILE")]
    pub sare: Option<PathBuf>,
    /// `qid<TAB>label` file.
    #[arg(long, value_name = "FILE")]
    pub query_types: Option<PathBuf>,
    /// Reject labels outside the six standard question categories.
    #[arg(long)]
    pub strict_types: bool,
    /// Comma-separated predictor order defining the index covariate.
    #[arg(long)]
    pub order: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimmatrixArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub k: Option<usize>,
    /// Use dense vectors when both stores are given.
    #[arg(long)]
    pub use_dense: bool,
    /// Reweight by query-document inner products (needs --query-vectors).
    #[arg(long)]
    pub adjusted: bool,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub queries: usize,
    #[arg(long, default_value_t = 100)]
    pub docs: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Inner,
    Cosine,
}

impl FromStr for Similarity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "inner" | "dot" => Ok(Similarity::Inner),
            "cosine" | "cos" => Ok(Similarity::Cosine),
            _ => Err(format!("unknown similarity `{s}` (inner or cosine)")),
        }
    }
}

impl Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Similarity::Inner => "inner",
            Similarity::Cosine => "cosine",
        })
    }
}

impl From<Similarity> for SimilarityKind {
    fn from(s: Similarity) -> Self {
        match s {
            Similarity::Inner => SimilarityKind::InnerProduct,
            Similarity::Cosine => SimilarityKind::Cosine,
        }
    }
}

/// Global options shared by all commands.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub jobs: Option<usize>,
    pub explain: bool,
    pub stamp: bool,
}

// ---------------------------------------------------------------------------
// settings resolution

struct Resolver {
    cfg: Config,
    inputs: Vec<(String, String)>,
    settings: Vec<(String, String)>,
    missing: Vec<String>,
}

impl Resolver {
    fn new(common: &Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        }
        .with_overrides(&common.set)?;
        cfg.check_keys(CONFIG_KEYS, OVERRIDE_PREFIXES)?;
        Ok(Self {
            cfg,
            inputs: Vec::new(),
            settings: Vec::new(),
            missing: Vec::new(),
        })
    }

    fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => self.cfg.parsed(key)?.unwrap_or(default),
        };
        self.settings.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    fn text(&mut self, key: &str, flag: Option<String>, default: &str) -> String {
        let v = flag
            .or_else(|| self.cfg.get(key).map(str::to_string))
            .unwrap_or_else(|| default.to_string());
        self.settings.push((key.to_string(), v.clone()));
        v
    }

    fn optional_text(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.or_else(|| self.cfg.get(key).map(str::to_string));
        if let Some(v) = &v {
            self.settings.push((key.to_string(), v.clone()));
        }
        v
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        let p = flag.or_else(|| self.cfg.path(key));
        if let Some(p) = &p {
            self.inputs.push((key.to_string(), p.display().to_string()));
        }
        p
    }

    fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> PathBuf {
        self.path(key, flag).unwrap_or_else(|| {
            self.missing.push(key.to_string());
            PathBuf::new()
        })
    }

    fn seed(&mut self, flag: Option<u64>) -> Result<u64> {
        self.value("seed", flag, DEFAULT_SEED)
    }

    /// Prints the settings and returns `true` when explaining; otherwise
    /// fails on missing required inputs.
    fn finish(&self, ctx: &Context) -> Result<bool> {
        if ctx.explain {
            let mut out = String::new();
            for (k, v) in self.inputs.iter().chain(&self.settings) {
                out.push_str(&format!("{k} = {v}\n"));
            }
            for k in &self.missing {
                out.push_str(&format!("# {k} = <required>\n"));
            }
            emit(None, &out)?;
            return Ok(true);
        }
        if !self.missing.is_empty() {
            let flags: Vec<String> = self
                .missing
                .iter()
                .map(|k| format!("--{}", k.replace('_', "-")))
                .collect();
            return Err(Error::Usage(format!(
                "missing required input(s): {} (flag or config key)",
                flags.join(", ")
            )));
        }
        Ok(false)
    }

    fn provenance(&self, command: &str, seed: u64, ctx: &Context) -> Provenance {
        let mut p = Provenance::new(command, seed).stamped(ctx.stamp);
        for (k, v) in &self.settings {
            if k != "seed" {
                p.push(k.clone(), v);
            }
        }
        p
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn file_name(p: &Path) -> String {
    p.display().to_string()
}

fn load_run(p: &Path) -> Result<BTreeMap<String, ScoredRanking>> {
    parse_run(&read_file(p)?, &file_name(p))
}

fn load_sparse(p: Option<&Path>) -> Result<Option<VectorStore>> {
    p.map(|p| parse_sparse_vectors(&read_file(p)?, &file_name(p))).transpose()
}

fn load_dense(p: Option<&Path>) -> Result<Option<VectorStore>> {
    p.map(|p| parse_dense_vectors(&read_file(p)?, &file_name(p))).transpose()
}

fn load_table(p: &Path) -> Result<QueryTable> {
    parse_table(&read_file(p)?, &file_name(p))
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|e| Error::Usage(format!("{what} `{t}`: {e}"))))
        .collect()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Predictors requested by name, or every predictor the given stores allow.
fn resolve_predictors(
    res: &mut Resolver,
    flag: Option<String>,
    has_sparse: bool,
    has_dense: bool,
    has_query_vecs: bool,
) -> Result<Vec<Predictor>> {
    let list = match flag.or_else(|| res.cfg.get("predictors").map(str::to_string)) {
        Some(s) => parse_list::<Predictor>(&s, "predictor")?,
        None => Predictor::ALL
            .into_iter()
            .filter(|p| {
                (!p.needs_sparse() || has_sparse)
                    && (!p.needs_dense() || has_dense)
                    && (!p.needs_query_vectors() || has_query_vecs)
            })
            .collect(),
    };
    if list.is_empty() {
        return Err(Error::Usage("no predictors requested".into()));
    }
    let mut seen = Vec::new();
    for p in &list {
        if seen.contains(p) {
            return Err(Error::Usage(format!("predictor `{p}` listed twice")));
        }
        seen.push(*p);
    }
    res.settings.push(("predictors".into(), join(&list)));
    Ok(list)
}

fn similarity_setting(res: &mut Resolver, flag: Option<Similarity>) -> Result<SimilarityKind> {
    Ok(res.value("similarity", flag, Similarity::Inner)?.into())
}

/// Per-predictor `prefix.Name = value` entries from the config.
fn apply_overrides(res: &mut Resolver, config: &mut PredictorConfig) -> Result<()> {
    let entries: Vec<(String, String)> = res
        .cfg
        .iter()
        .filter(|(k, _)| k.contains('.'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    for (key, value) in entries {
        let Some((field, name)) = key.split_once('.') else { continue };
        let p: Predictor = name
            .parse()
            .map_err(|e| Error::Usage(format!("config key `{key}`: {e}")))?;
        if !config.predictors.contains(&p) {
            warn!("ignoring `{key}`: {p} not requested");
            continue;
        }
        let mut s = config.settings(p);
        let bad = || Error::Usage(format!("config key `{key}`: cannot parse `{value}`"));
        match field {
            "k" => s.k = value.parse().map_err(|_| bad())?,
            "tau_upper" => s.pair_ratio.tau_upper = value.parse().map_err(|_| bad())?,
            "tau_lower" => s.pair_ratio.tau_lower = value.parse().map_err(|_| bad())?,
            "lambda" => s.lambda = value.parse().map_err(|_| bad())?,
            "seed" => s.rsd.seed = value.parse().map_err(|_| bad())?,
            _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
        }
        config.overrides.insert(p, s);
        res.settings.push((format!("{field}.{}", p.name()), value));
    }
    Ok(())
}

/// Fails before any file is read when a requested predictor lacks its store.
fn check_stores(predictors: &[Predictor], sparse: bool, dense: bool, query_vecs: bool) -> Result<()> {
    let lacking = |need: fn(Predictor) -> bool, have: bool| -> Vec<Predictor> {
        if have {
            Vec::new()
        } else {
            predictors.iter().copied().filter(|&p| need(p)).collect()
        }
    };
    for (names, flag) in [
        (lacking(Predictor::needs_sparse, sparse), "--sparse"),
        (lacking(Predictor::needs_dense, dense), "--dense"),
        (lacking(Predictor::needs_query_vectors, query_vecs), "--query-vectors"),
    ] {
        if !names.is_empty() {
            return Err(Error::Usage(format!("{} need(s) {flag}", join(&names))));
        }
    }
    Ok(())
}

/// Rejects settings that would fail for every query, before any work.
fn validate_settings(config: &PredictorConfig) -> Result<()> {
    for &p in &config.predictors {
        let s = config.settings(p);
        let ctx = |e| Error::core(format!("{p}"), e);
        if s.k == 0 {
            return Err(Error::Usage(format!("{p}: k must be positive")));
        }
        if p.uses_rsd() {
            s.rsd.validate().map_err(ctx)?;
            if s.k < p.min_k(&s.rsd) {
                return Err(Error::Usage(format!(
                    "{p}: k = {} below minimum {}",
                    s.k,
                    p.min_k(&s.rsd)
                )));
            }
        }
        if p.uses_pair_ratio() {
            s.pair_ratio.validate(s.k).map_err(ctx)?;
        }
        if p.is_interpolated() {
            InterpolationParams::new(s.lambda).map_err(ctx)?;
        }
    }
    Ok(())
}

fn failure_error(failures: &[Failure]) -> Error {
    let listed: Vec<String> = failures
        .iter()
        .take(5)
        .map(|f| format!("query `{}`, predictor {}: {}", f.query_id, f.predictor, f.error))
        .collect();
    let more = failures.len().saturating_sub(listed.len());
    let mut msg = format!("{} value(s) could not be computed: {}", failures.len(), listed.join("; "));
    if more > 0 {
        msg.push_str(&format!("; and {more} more"));
    }
    if failures.iter().all(|f| f.error.is_numerical()) {
        Error::Numerical(msg)
    } else {
        Error::Data(msg)
    }
}

// ---------------------------------------------------------------------------
// commands

pub fn cmd_predict(ctx: &Context, args: PredictArgs) -> Result<()> {
    let mut res = Resolver::new(&args.common)?;
    let run = res.required_path("run", args.run);
    let sparse_p = res.path("sparse", args.vectors.sparse);
    let dense_p = res.path("dense", args.vectors.dense);
    let qv_p = res.path("query_vectors", args.vectors.query_vectors);
    let predictors = resolve_predictors(
        &mut res,
        args.predictors,
        sparse_p.is_some(),
        dense_p.is_some(),
        qv_p.is_some(),
    )?;
    let d = PredictorSettings::default();
    let mut config = PredictorConfig::new(predictors);
    config.similarity = similarity_setting(&mut res, args.vectors.similarity)?;
    config.defaults.k = res.value("k", args.k, d.k)?;
    config.defaults.pair_ratio.tau_upper = res.value("tau_upper", args.tau_upper, d.pair_ratio.tau_upper)?;
    config.defaults.pair_ratio.tau_lower = res.value("tau_lower", args.tau_lower, d.pair_ratio.tau_lower)?;
    config.defaults.lambda = res.value("lambda", args.lambda, d.lambda)?;
    config.defaults.rsd.num_samples = res.value("rsd_samples", args.rsd_samples, d.rsd.num_samples)?;
    let seed = res.seed(args.common.seed)?;
    config.defaults.rsd.seed = seed;
    apply_overrides(&mut res, &mut config)?;
    if res.finish(ctx)? {
        return Ok(());
    }

    check_stores(&config.predictors, sparse_p.is_some(), dense_p.is_some(), qv_p.is_some())?;
    validate_settings(&config)?;

    let rankings = load_run(&run)?;
    let sparse = load_sparse(sparse_p.as_deref())?;
    let dense = load_dense(dense_p.as_deref())?;
    let query_vecs = load_dense(qv_p.as_deref())?;
    let inputs = PredictorInputs {
        rankings: &rankings,
        sparse: sparse.as_ref(),
        dense: dense.as_ref(),
        query_vecs: query_vecs.as_ref(),
    };
    inputs
        .check(&config.predictors)
        .map_err(|e| Error::core("inputs", e))?;
    info!("computing {} predictor(s) for {} queries", config.predictors.len(), rankings.len());
    let ids: Vec<&String> = rankings.keys().collect();
    let rows = with_pool(ctx.jobs, || {
        ids.par_iter()
            .map(|q| compute_row(&inputs, &config, q))
            .collect::<Vec<_>>()
    })?;
    let output = assemble(&config, rows).map_err(|e| Error::core("assembling predictor table", e))?;
    for f in &output.failures {
        warn!("query `{}`, predictor {}: {}", f.query_id, f.predictor, f.error);
    }
    let provenance = res.provenance("predict", seed, ctx);
    emit(args.common.out.as_deref(), &write_table(&output.table, &provenance))?;
    if !output.failures.is_empty() && !args.keep_going {
        return Err(failure_error(&output.failures));
    }
    Ok(())
}

pub fn cmd_evaluate(ctx: &Context, args: EvaluateArgs) -> Result<()> {
    let mut res = Resolver::new(&args.common)?;
    let run = res.required_path("run", args.run);
    let qrels_p = res.required_path("qrels", args.qrels);
    let metrics_s = res.text("metrics", args.metrics, &join(&Metric::DEFAULTS));
    let rel_threshold = res.value("rel_threshold", args.rel_threshold, 2)?;
    let seed = res.seed(args.common.seed)?;
    let metrics: Vec<Metric> = parse_list(&metrics_s, "metric")?;
    if metrics.is_empty() {
        return Err(Error::Usage("no metrics requested".into()));
    }
    if res.finish(ctx)? {
        return Ok(());
    }
    let rankings = load_run(&run)?;
    let parsed = parse_qrels(&read_file(&qrels_p)?, &file_name(&qrels_p))?;
    if parsed.duplicates > 0 {
        warn!("{} duplicate judgment(s) in {}; the last grade was kept", parsed.duplicates, file_name(&qrels_p));
    }
    let ev = evaluate(&rankings, &parsed.qrels, &metrics, rel_threshold)
        .map_err(|e| Error::core("evaluation", e))?;
    if !ev.dropped_queries.is_empty() {
        warn!(
            "{} quer(ies) without judgments dropped: {}",
            ev.dropped_queries.len(),
            ev.dropped_queries.join(", ")
        );
    }
    if ev.table.num_rows() == 0 {
        warn!("no query in the run has judgments; writing an empty table");
    }
    let provenance = res.provenance("evaluate", seed, ctx);
    emit(args.common.out.as_deref(), &write_table(&ev.table, &provenance))
}

pub fn cmd_correlate(ctx: &Context, args: CorrelateArgs) -> Result<()> {
    let mut res = Resolver::new(&args.common)?;
    let pred_p = res.required_path("predictions", args.predictions);
    let eff_p = res.required_path("effectiveness", args.effectiveness);
    let metric = res.optional_text("metric", args.metric);
    let predictor = args.predictor.inspect(|p| res.settings.push(("predictor".into(), p.clone())));
    let seed = res.seed(args.common.seed)?;
    if res.finish(ctx)? {
        return Ok(());
    }
    let preds = load_table(&pred_p)?;
    let eff = load_table(&eff_p)?;
    let single = metric.is_some() && predictor.is_some();
    let p_names: Vec<String> = match &predictor {
        Some(p) => vec![p.clone()],
        None => preds.names().to_vec(),
    };
    let m_names: Vec<String> = match &metric {
        Some(m) => vec![m.clone()],
        None => eff.names().to_vec(),
    };
    let mut out = res.provenance("correlate", seed, ctx).comment_lines();
    out.push_str("predictor\tmetric\tn\ttau\tp_value\tsignificant\n");
    for p in &p_names {
        let pc = preds
            .column(p)
            .map_err(|_| Error::Data(format!("{}: no predictor column `{p}`", file_name(&pred_p))))?;
        for m in &m_names {
            let mc = eff
                .column(m)
                .map_err(|_| Error::Data(format!("{}: no metric column `{m}`", file_name(&eff_p))))?;
            match kendall_columns(&pc, &mc) {
                Ok(r) => out.push_str(&format!(
                    "{p}\t{m}\t{}\t{}\t{}\t{}\n",
                    r.n,
                    r.tau,
                    r.p_value,
                    r.significant(ALPHA)
                )),
                Err(e) if !single => {
                    warn!("{p} vs {m}: {e}");
                    out.push_str(&format!("{p}\t{m}\tNA\tNA\tNA\tNA\n"));
                }
                Err(e) => return Err(Error::core(format!("{p} vs {m}"), e)),
            }
        }
    }
    emit(args.common.out.as_deref(), &out)
}

pub fn cmd_sare(ctx: &Context, args: SareArgs) -> Result<()> {
    let mut res = Resolver::new(&args.common)?;
    let pred_p = res.required_path("predictions", args.predictions);
    let eff_p = res.required_path("effectiveness", args.effectiveness);
    let metric = res.text("metric", args.metric, "NDCG@10");
    let seed = res.seed(args.common.seed)?;
    if res.finish(ctx)? {
        return Ok(());
    }
    let preds = load_table(&pred_p)?;
    let eff = load_table(&eff_p)?;
    let mc = eff
        .column(&metric)
        .map_err(|_| Error::Data(format!("{}: no metric column `{metric}`", file_name(&eff_p))))?;
    let table = sare_table(&preds, &mc).map_err(|e| Error::core("sARE", e))?;
    emit(
        args.common.out.as_deref(),
        &write_table(&table, &res.provenance("sare", seed, ctx)),
    )
}

pub fn cmd_lme(ctx: &Context, args: LmeArgs) -> Result<()> {
    let mut res = Resolver::new(&args.common)?;
    let sare_p = res.required_path("sare", args.sare);
    let types_p = res.required_path("query_types", args.query_types);
    let strict = res.value("strict_types", args.strict_types.then_some(true), false)?;
    let order = res.optional_text("order", args.order);
    if order.is_none() {
        res.missing.push("order".into());
    }
    let seed = res.seed(args.common.seed)?;
    if res.finish(ctx)? {
        return Ok(());
    }
    let order: Vec<String> = parse_list(&order.unwrap_or_default(), "predictor")?;
    let sare = load_table(&sare_p)?;
    let types = parse_query_types(&read_file(&types_p)?, &file_name(&types_p), strict)?;
    info!("predictor order: {}", order.join(", "));
    let design = build_design(&sare, &types, &order).map_err(|e| Error::core("building the design", e))?;
    let (chosen, report) = select_model(&design).map_err(|e| Error::core("model selection", e))?;
    info!("selected the {} model (deviance {})", chosen.model, chosen.deviance);
    for n in &report.notes {
        warn!("{n}");
    }
    let provenance = res.provenance("lme", seed, ctx);
    emit(args.common.out.as_deref(), &render(&selection_json(&report, &provenance)))
}

pub fn cmd_simmatrix(ctx: &Context, args: SimmatrixArgs) -> Result<()> {
    let mut res = Resolver::new(&args.common)?;
    let run = res.required_path("run", args.run);
    let sparse_p = res.path("sparse", args.vectors.sparse);
    let dense_p = res.path("dense", args.vectors.dense);
    let qv_p = res.path("query_vectors", args.vectors.query_vectors);
    res.settings.push(("query".into(), args.query.clone()));
    let k = res.value("k", args.k, 100)?;
    let similarity = similarity_setting(&mut res, args.vectors.similarity)?;
    let seed = res.seed(args.common.seed)?;
    if args.adjusted {
        res.settings.push(("adjusted".into(), "true".into()));
    }
    let use_dense = args.use_dense || args.adjusted || sparse_p.is_none();
    let store_p = if use_dense { dense_p } else { sparse_p };
    if store_p.is_none() {
        res.missing.push(if use_dense { "dense".into() } else { "sparse".into() });
    }
    if args.adjusted && qv_p.is_none() {
        res.missing.push("query_vectors".into());
    }
    if res.finish(ctx)? {
        return Ok(());
    }
    let store_p = store_p.unwrap_or_default();
    let rankings = load_run(&run)?;
    let ranking = rankings
        .get(&args.query)
        .ok_or_else(|| Error::Data(format!("query `{}` not in {}", args.query, file_name(&run))))?;
    let store = if use_dense {
        parse_dense_vectors(&read_file(&store_p)?, &file_name(&store_p))?
    } else {
        parse_sparse_vectors(&read_file(&store_p)?, &file_name(&store_p))?
    };
    let ctx_err = |e| Error::core(format!("query `{}`", args.query), e);
    let mut w = build_sim_matrix(ranking, &store, k, similarity).map_err(ctx_err)?;
    if args.adjusted {
        let qv_p = qv_p.unwrap_or_default();
        let qv = parse_dense_vectors(&read_file(&qv_p)?, &file_name(&qv_p))?;
        let theta = qv
            .dense(&args.query)
            .ok_or_else(|| Error::Data(format!("no query vector for `{}`", args.query)))?;
        w = adjust_matrix(&w, theta, &store).map_err(ctx_err)?;
    }
    let mut out = res.provenance("simmatrix", seed, ctx).comment_lines();
    let _ = write_matrix_csv(&w, &mut out);
    emit(args.common.out.as_deref(), &out)
}

pub fn cmd_tune(ctx: &Context, args: TuneArgs) -> Result<()> {
    let mut res = Resolver::new(&args.common)?;
    let run = res.required_path("run", args.run);
    let qrels_p = res.path("qrels", args.qrels);
    let eff_p = res.path("effectiveness", args.effectiveness);
    if qrels_p.is_none() && eff_p.is_none() {
        res.missing.push("qrels".into());
    }
    let sparse_p = res.path("sparse", args.vectors.sparse);
    let dense_p = res.path("dense", args.vectors.dense);
    let qv_p = res.path("query_vectors", args.vectors.query_vectors);
    let trace_p = res.path("trace", args.trace);
    let metric_s = res.text("metric", args.metric, "NDCG@10");
    let rel_threshold = res.value("rel_threshold", args.rel_threshold, 2)?;
    let predictors = resolve_predictors(
        &mut res,
        args.predictors,
        sparse_p.is_some(),
        dense_p.is_some(),
        qv_p.is_some(),
    )?;
    let cutoffs_s = res.text("cutoffs", args.cutoffs, &join(&DEFAULT_CUTOFFS));
    let lambdas_default = join(&TuningGrid::default().lambdas);
    let lambdas_s = res.text("lambdas", args.lambdas, &lambdas_default);
    let similarity = similarity_setting(&mut res, args.vectors.similarity)?;
    let mut base = PredictorSettings::default();
    base.rsd.num_samples = res.value("rsd_samples", args.rsd_samples, base.rsd.num_samples)?;
    let seed = res.seed(args.common.seed)?;
    base.rsd.seed = seed;
    if res.finish(ctx)? {
        return Ok(());
    }
    check_stores(&predictors, sparse_p.is_some(), dense_p.is_some(), qv_p.is_some())?;
    let mut grid = TuningGrid::from_cutoffs(parse_list(&cutoffs_s, "cutoff")?);
    grid.lambdas = parse_list(&lambdas_s, "lambda")?;
    grid.validate().map_err(|e| Error::Usage(e.to_string()))?;
    if eff_p.is_some() && qrels_p.is_some() {
        return Err(Error::Usage("give either qrels or effectiveness, not both".into()));
    }
    let metric: Metric = metric_s.parse().map_err(|e: qpp_core::Error| Error::Usage(e.to_string()))?;

    let rankings = load_run(&run)?;
    let effectiveness: Column = match (&qrels_p, &eff_p) {
        (Some(q), _) => {
            let parsed = parse_qrels(&read_file(q)?, &file_name(q))?;
            if parsed.duplicates > 0 {
                warn!("{} duplicate judgment(s); the last grade was kept", parsed.duplicates);
            }
            evaluate(&rankings, &parsed.qrels, &[metric], rel_threshold)
                .and_then(|ev| ev.table.column(&metric.to_string()))
                .map_err(|e| Error::core("evaluation", e))?
        }
        (None, Some(e)) => load_table(e)?.column(&metric.to_string()).map_err(|_| {
            Error::Data(format!("{}: no metric column `{metric}`", file_name(e)))
        })?,
        (None, None) => unreachable!("checked above"),
    };
    let sparse = load_sparse(sparse_p.as_deref())?;
    let dense = load_dense(dense_p.as_deref())?;
    let query_vecs = load_dense(qv_p.as_deref())?;
    let inputs = PredictorInputs {
        rankings: &rankings,
        sparse: sparse.as_ref(),
        dense: dense.as_ref(),
        query_vecs: query_vecs.as_ref(),
    };
    inputs.check(&predictors).map_err(|e| Error::core("inputs", e))?;
    let shortest = shortest_tuning_ranking(&inputs, &effectiveness).map_err(|e| Error::core("tuning", e))?;

    let plans: Vec<_> = predictors
        .iter()
        .map(|&p| (p, enumerate_points(p, &grid, &base, shortest)))
        .collect();
    let tasks: Vec<(usize, Predictor, qpp_core::tuning::GridPoint)> = plans
        .iter()
        .enumerate()
        .flat_map(|(i, (p, (points, _)))| points.iter().map(move |pt| (i, *p, *pt)))
        .collect();
    info!("evaluating {} grid points", tasks.len());
    let kind: SimilarityKind = similarity;
    let rows: Vec<(usize, TraceRow)> = with_pool(ctx.jobs, || {
        tasks
            .par_iter()
            .map(|(i, p, pt)| (*i, evaluate_point(*p, pt, &inputs, &effectiveness, &base, kind)))
            .collect()
    })?;
    let mut traces: Vec<Vec<TraceRow>> = vec![Vec::new(); plans.len()];
    for (i, r) in rows {
        traces[i].push(r);
    }
    let mut results: Vec<TuningResult> = Vec::new();
    for ((p, (_, skipped)), trace) in plans.into_iter().zip(traces) {
        results.push(finish(p, trace, skipped).map_err(|e| Error::core(format!("tuning {p}"), e))?);
    }

    let mut provenance = res.provenance("tune", seed, ctx);
    provenance.push("tuning_queries", effectiveness.len());
    for r in &results {
        provenance.push(format!("tau.{}", r.predictor), r.best_tau);
    }
    let mut conf = provenance.comment_lines();
    conf.push_str(&format!("predictors = {}\n", join(&predictors)));
    conf.push_str(&format!("similarity = {}\n", if similarity == SimilarityKind::Cosine { "cosine" } else { "inner" }));
    conf.push_str(&format!("rsd_samples = {}\n", base.rsd.num_samples));
    conf.push_str(&format!("seed = {seed}\n"));
    for r in &results {
        let name = r.predictor.name();
        conf.push_str(&format!("k.{name} = {}\n", r.best.k));
        if let Some(pr) = r.best.pair_ratio {
            conf.push_str(&format!("tau_upper.{name} = {}\n", pr.tau_upper));
            conf.push_str(&format!("tau_lower.{name} = {}\n", pr.tau_lower));
        }
        if let Some(l) = r.best.lambda {
            conf.push_str(&format!("lambda.{name} = {l}\n"));
        }
        if r.predictor.uses_rsd() {
            conf.push_str(&format!("seed.{name} = {}\n", grid_seed(seed, &r.best)));
        }
    }
    emit(args.common.out.as_deref(), &conf)?;

    if let Some(tp) = trace_p {
        let mut t = res.provenance("tune-trace", seed, ctx).comment_lines();
        t.push_str("predictor\tk\ttau_upper\ttau_lower\tlambda\tstatus\ttau\tnote\n");
        let na = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
        for r in &results {
            let line = |pt: &qpp_core::tuning::GridPoint, status: &str, tau: Option<f64>, note: &str| {
                format!(
                    "{}\t{}\t{}\t{}\t{}\t{status}\t{}\t{note}\n",
                    r.predictor,
                    pt.k,
                    na(pt.pair_ratio.map(|p| p.tau_upper.to_string())),
                    na(pt.pair_ratio.map(|p| p.tau_lower.to_string())),
                    na(pt.lambda.map(|l| l.to_string())),
                    na(tau.map(|x| x.to_string())),
                )
            };
            for row in &r.trace {
                t.push_str(&line(&row.point, "evaluated", row.tau, row.note.as_deref().unwrap_or("")));
            }
            for (pt, why) in &r.skipped {
                t.push_str(&line(pt, "skipped", None, why));
            }
        }
        write_file(&tp, &t)?;
    }
    Ok(())
}

pub fn cmd_fixture(ctx: &Context, args: FixtureArgs) -> Result<()> {
    let spec = FixtureSpec {
        num_queries: args.queries,
        docs_per_query: args.docs,
        dim: args.dim,
        seed: args.seed.unwrap_or(crate::fixture::DEFAULT_SEED),
    };
    if ctx.explain {
        return emit(
            None,
            &format!(
                "out = {}\nseed = {}\nqueries = {}\ndocs = {}\ndim = {}\n",
                args.out.display(),
                spec.seed,
                spec.num_queries,
                spec.docs_per_query,
                spec.dim
            ),
        );
    }
    generate(&spec)?.write_to(&args.out)
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context {
        jobs: cli.jobs,
        explain: cli.explain,
        stamp: cli.stamp,
    };
    if cli.jobs == Some(0) {
        return Err(Error::Usage("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::Predict(a) => cmd_predict(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Correlate(a) => cmd_correlate(&ctx, a),
        Command::Tune(a) => cmd_tune(&ctx, a),
        Command::Sare(a) => cmd_sare(&ctx, a),
        Command::Lme(a) => cmd_lme(&ctx, a),
        Command::Simmatrix(a) => cmd_simmatrix(&ctx, a),
        Command::Fixture(a) => cmd_fixture(&ctx, a),
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code:
/// 0 ok, 1 usage, 2 data error, 3 numerical failure.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.exit_code() == 0 { 0 } else { 1 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("qpp: error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
