//! Unsupervised post-retrieval predictors.
//!
//! Score-based: [`max_score`], [`nqc`], [`rsd_uni`]. Coherence-based, over a
//! similarity matrix of the top-k documents: [`autocorrelation`], [`wand`] and
//! [`wd`] on the pruned graph, [`pair_ratio`] and its query-adjusted form
//! [`a_pair_ratio`]. [`interpolate`] blends a coherence column with NQC across
//! a query set.
//!
//! [`compute_all`] drives all thirteen named predictors over a set of
//! rankings; per-query failures become explicit gaps with a reason.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::similarity::{
    adjust_matrix, build_sim_matrix, prune_graph, PrunedGraph, SimMatrix, SimilarityKind,
};
use crate::stats::{mean, pearson, population_std};
use crate::types::{Column, DenseVector, PredictorTable, ScoredRanking, VectorStore};

/// Normalisers at or below this magnitude are treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// 1-based block boundaries for pairRatio: the upper block is ranks
/// `1..=tau_upper`, the lower block ranks `tau_lower..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairRatioParams {
    pub tau_upper: usize,
    pub tau_lower: usize,
}

impl PairRatioParams {
    pub fn validate(&self, k: usize) -> Result<()> {
        let ok = self.tau_upper >= 2 && self.tau_upper <= self.tau_lower && self.tau_lower < k;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "pairRatio needs 2 <= tau_upper <= tau_lower < k, got ({}, {}) with k = {k}",
                self.tau_upper, self.tau_lower
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsdParams {
    pub num_samples: usize,
    pub frac_low: f64,
    pub frac_high: f64,
    pub seed: u64,
}

impl Default for RsdParams {
    fn default() -> Self {
        Self {
            num_samples: 100,
            frac_low: 0.60,
            frac_high: 0.80,
            seed: 0,
        }
    }
}

impl RsdParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidParams("RSD needs at least one sample".into()));
        }
        if !(self.frac_low > 0.0 && self.frac_low <= self.frac_high && self.frac_high <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "RSD fractions must satisfy 0 < low <= high <= 1, got {} and {}",
                self.frac_low, self.frac_high
            )));
        }
        Ok(())
    }

    /// Inclusive sample-size range `[ceil(low*k), floor(high*k)]`.
    pub fn sample_sizes(&self, k: usize) -> (usize, usize) {
        let kf = k as f64;
        // guard against 0.6*10 landing a hair above 6
        let lo = libm::ceil(self.frac_low * kf - 1e-9) as usize;
        let hi = libm::floor(self.frac_high * kf + 1e-9) as usize;
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationParams {
    pub lambda: f64,
}

impl InterpolationParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(Self { lambda })
        } else {
            Err(Error::InvalidParams(format!("lambda {lambda} outside [0,1]")))
        }
    }
}

fn nonzero_normaliser(mu: f64) -> Result<f64> {
    if libm::fabs(mu) <= DEGENERATE_EPS {
        Err(Error::Degenerate(format!(
            "mean top-k score {mu} too close to zero to normalise"
        )))
    } else {
        Ok(libm::fabs(mu))
    }
}

/// Maximum score among the top `k`.
pub fn max_score(ranking: &ScoredRanking, k: usize) -> f64 {
    ranking
        .head(k.max(1))
        .iter()
        .map(|e| e.score)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Population standard deviation of the top-`k` scores over the absolute mean.
pub fn nqc(ranking: &ScoredRanking, k: usize) -> Result<f64> {
    let scores = ranking.top_scores(k.max(1));
    let mu = nonzero_normaliser(mean(&scores))?;
    Ok(population_std(&scores) / mu)
}

/// Uniform-sampling robust standard deviation: mean population std over
/// `num_samples` random subsets of the top `k`, normalised like [`nqc`].
///
/// Each iteration draws the subset size uniformly from
/// [`RsdParams::sample_sizes`] and then the subset itself by a partial
/// Fisher-Yates shuffle, both from one ChaCha8 stream seeded with `seed`.
pub fn rsd_uni(ranking: &ScoredRanking, k: usize, params: &RsdParams) -> Result<f64> {
    params.validate()?;
    let scores = ranking.top_scores(k);
    let k = scores.len();
    let (lo, hi) = params.sample_sizes(k);
    if k < 2 || lo < 2 || lo > hi {
        return Err(Error::InvalidParams(format!(
            "RSD sample range [{lo}, {hi}] unusable for k = {k}"
        )));
    }
    let mu = nonzero_normaliser(mean(&scores))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut idx: Vec<usize> = (0..k).collect();
    let mut sample = Vec::with_capacity(hi);
    let mut total = 0.0;
    for _ in 0..params.num_samples {
        let m = rng.random_range(lo as u64..=hi as u64) as usize;
        for t in 0..m {
            let j = rng.random_range(t as u64..k as u64) as usize;
            idx.swap(t, j);
        }
        sample.clear();
        sample.extend(idx[..m].iter().map(|&i| scores[i]));
        total += population_std(&sample);
    }
    Ok(total / params.num_samples as f64 / mu)
}

/// Pearson correlation between the top-k scores and their diffusion `W * s`.
pub fn autocorrelation(w: &SimMatrix, ranking: &ScoredRanking) -> Result<f64> {
    let k = w.k();
    if k < 3 {
        return Err(Error::InvalidParams(format!(
            "autocorrelation needs k >= 3, got {k}"
        )));
    }
    let scores = ranking.top_scores(k);
    if scores.len() != k {
        return Err(Error::InvalidParams(
            "ranking shorter than similarity matrix".into(),
        ));
    }
    let diffused = w.mul_vec(&scores);
    pearson(&scores, &diffused).ok_or_else(|| {
        Error::Degenerate("zero variance in original or diffused scores".into())
    })
}

/// Average neighbour degree on the pruned graph; isolated nodes contribute 0.
pub fn wand(graph: &PrunedGraph) -> f64 {
    let k = graph.k();
    if k == 0 {
        return 0.0;
    }
    let total: f64 = (0..k)
        .map(|i| {
            let n_i = graph.degree(i);
            if n_i == 0 {
                0.0
            } else {
                let s: usize = graph.neighbours(i).iter().map(|&j| graph.degree(j)).sum();
                s as f64 / n_i as f64
            }
        })
        .sum();
    total / k as f64
}

/// Edge density `2|E| / (k (k - 1))`.
pub fn wd(graph: &PrunedGraph) -> Result<f64> {
    let k = graph.k();
    if k < 2 {
        return Err(Error::InvalidParams("density needs k >= 2".into()));
    }
    Ok(2.0 * graph.num_edges() as f64 / (k as f64 * (k as f64 - 1.0)))
}

/// Mean off-diagonal similarity of the upper rank block over that of the
/// lower block.
pub fn pair_ratio(w: &SimMatrix, params: &PairRatioParams) -> Result<f64> {
    params.validate(w.k())?;
    let up = w
        .block_mean(0, params.tau_upper - 1)
        .expect("validated block");
    let lo = w
        .block_mean(params.tau_lower - 1, w.k() - 1)
        .expect("validated block");
    if libm::fabs(lo) <= DEGENERATE_EPS {
        return Err(Error::Degenerate(format!(
            "lower-block mean similarity {lo} too close to zero"
        )));
    }
    Ok(up / lo)
}

/// [`pair_ratio`] on the query-adjusted matrix.
pub fn a_pair_ratio(
    w: &SimMatrix,
    query_vec: &DenseVector,
    store: &VectorStore,
    params: &PairRatioParams,
) -> Result<f64> {
    pair_ratio(&adjust_matrix(w, query_vec, store)?, params)
}

fn min_max(column: &Column, what: &str) -> Result<BTreeMap<String, f64>> {
    let lo = column.values().copied().fold(f64::INFINITY, f64::min);
    let hi = column.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if column.is_empty() || hi <= lo {
        return Err(Error::Degenerate(format!(
            "{what} column is constant; min-max normalisation undefined"
        )));
    }
    Ok(column
        .iter()
        .map(|(q, v)| (q.clone(), (v - lo) / (hi - lo)))
        .collect())
}

/// `lambda * norm(coherence) + (1 - lambda) * norm(nqc)` per query, each column
/// min-max normalised over the query set.
pub fn interpolate(
    coherence: &Column,
    nqc_values: &Column,
    params: &InterpolationParams,
) -> Result<Column> {
    if coherence.len() != nqc_values.len() || coherence.keys().any(|q| !nqc_values.contains_key(q))
    {
        return Err(Error::InvalidParams(
            "interpolated columns must cover the same queries".into(),
        ));
    }
    let a = min_max(coherence, "coherence")?;
    let b = min_max(nqc_values, "NQC")?;
    let lambda = params.lambda;
    Ok(a
        .iter()
        .map(|(q, x)| (q.clone(), lambda * x + (1.0 - lambda) * b[q]))
        .collect())
}

/// The thirteen named unsupervised predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predictor {
    Max,
    Nqc,
    Rsd,
    Ac,
    Wand,
    Wd,
    WandNqc,
    WdNqc,
    AcEmbs,
    WandEmbs,
    WdEmbs,
    PairRatio,
    APairRatio,
}

impl Predictor {
    pub const ALL: [Predictor; 13] = [
        Predictor::Max,
        Predictor::Nqc,
        Predictor::Rsd,
        Predictor::Ac,
        Predictor::Wand,
        Predictor::Wd,
        Predictor::WandNqc,
        Predictor::WdNqc,
        Predictor::AcEmbs,
        Predictor::WandEmbs,
        Predictor::WdEmbs,
        Predictor::PairRatio,
        Predictor::APairRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::Max => "Max",
            Predictor::Nqc => "NQC",
            Predictor::Rsd => "RSD(uni)",
            Predictor::Ac => "AC",
            Predictor::Wand => "WAND",
            Predictor::Wd => "WD",
            Predictor::WandNqc => "WAND(NQC)",
            Predictor::WdNqc => "WD(NQC)",
            Predictor::AcEmbs => "AC-embs",
            Predictor::WandEmbs => "WAND-embs",
            Predictor::WdEmbs => "WD-embs",
            Predictor::PairRatio => "pairRatio",
            Predictor::APairRatio => "A-pairRatio",
        }
    }

    pub fn needs_sparse(self) -> bool {
        matches!(
            self,
            Predictor::Ac | Predictor::Wand | Predictor::Wd | Predictor::WandNqc | Predictor::WdNqc
        )
    }

    pub fn needs_dense(self) -> bool {
        matches!(
            self,
            Predictor::AcEmbs
                | Predictor::WandEmbs
                | Predictor::WdEmbs
                | Predictor::PairRatio
                | Predictor::APairRatio
        )
    }

    pub fn needs_query_vectors(self) -> bool {
        self == Predictor::APairRatio
    }

    pub fn uses_pair_ratio(self) -> bool {
        matches!(self, Predictor::PairRatio | Predictor::APairRatio)
    }

    pub fn is_interpolated(self) -> bool {
        matches!(self, Predictor::WandNqc | Predictor::WdNqc)
    }

    pub fn uses_rsd(self) -> bool {
        self == Predictor::Rsd
    }

    /// Smallest cutoff at which the predictor is defined.
    pub fn min_k(self, rsd: &RsdParams) -> usize {
        match self {
            Predictor::Max | Predictor::Nqc => 1,
            Predictor::Wand | Predictor::Wd | Predictor::WandNqc | Predictor::WdNqc => 2,
            Predictor::WandEmbs | Predictor::WdEmbs => 2,
            Predictor::Ac | Predictor::AcEmbs => 3,
            Predictor::PairRatio | Predictor::APairRatio => 3,
            Predictor::Rsd => (2..)
                .find(|&k| {
                    let (lo, hi) = rsd.sample_sizes(k);
                    lo >= 2 && lo <= hi
                })
                .unwrap_or(usize::MAX),
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim();
        Predictor::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(wanted))
            .or(match wanted.to_ascii_lowercase().as_str() {
                "rsd" => Some(Predictor::Rsd),
                "max-score" | "maxscore" => Some(Predictor::Max),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidParams(format!("unknown predictor `{s}`")))
    }
}

/// Hyperparameters of one predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorSettings {
    pub k: usize,
    pub pair_ratio: PairRatioParams,
    pub lambda: f64,
    pub rsd: RsdParams,
}

impl Default for PredictorSettings {
    fn default() -> Self {
        Self {
            k: 100,
            pair_ratio: PairRatioParams {
                tau_upper: 10,
                tau_lower: 50,
            },
            lambda: 0.5,
            rsd: RsdParams::default(),
        }
    }
}

/// Which predictors to compute and with which settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub predictors: Vec<Predictor>,
    pub defaults: PredictorSettings,
    pub overrides: BTreeMap<Predictor, PredictorSettings>,
    pub similarity: SimilarityKind,
}

impl PredictorConfig {
    pub fn new(predictors: Vec<Predictor>) -> Self {
        Self {
            predictors,
            defaults: PredictorSettings::default(),
            overrides: BTreeMap::new(),
            similarity: SimilarityKind::default(),
        }
    }

    pub fn settings(&self, p: Predictor) -> PredictorSettings {
        self.overrides.get(&p).copied().unwrap_or(self.defaults)
    }
}

/// Borrowed inputs for predictor computation.
#[derive(Debug, Clone, Copy)]
pub struct PredictorInputs<'a> {
    pub rankings: &'a BTreeMap<String, ScoredRanking>,
    pub sparse: Option<&'a VectorStore>,
    pub dense: Option<&'a VectorStore>,
    pub query_vecs: Option<&'a VectorStore>,
}

impl<'a> PredictorInputs<'a> {
    pub fn scores_only(rankings: &'a BTreeMap<String, ScoredRanking>) -> Self {
        Self {
            rankings,
            sparse: None,
            dense: None,
            query_vecs: None,
        }
    }

    /// Rejects a request whose predictors lack a required store, before any
    /// per-query work.
    pub fn check(&self, predictors: &[Predictor]) -> Result<()> {
        for &p in predictors {
            if p.needs_sparse() && self.sparse.is_none() {
                return Err(Error::MissingInput(format!("{p} needs a sparse vector store")));
            }
            if p.needs_dense() && self.dense.is_none() {
                return Err(Error::MissingInput(format!("{p} needs a dense vector store")));
            }
            if p.needs_query_vectors() && self.query_vecs.is_none() {
                return Err(Error::MissingInput(format!("{p} needs query vectors")));
            }
        }
        if let Some(s) = self.sparse {
            if s.dim().is_some() {
                return Err(Error::KindMismatch("sparse store holds dense vectors".into()));
            }
        }
        if let Some(s) = self.dense {
            if s.dim().is_none() {
                return Err(Error::KindMismatch("dense store holds sparse vectors".into()));
            }
        }
        if let Some(s) = self.query_vecs {
            if s.dim() != self.dense.and_then(|d| d.dim()) {
                return Err(Error::KindMismatch(
                    "query vectors must be dense with the document store's dim".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A per-query predictor value that could not be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub query_id: String,
    pub predictor: Predictor,
    pub error: Error,
}

/// Raw per-query results; interpolated predictors carry their two
/// components until the whole query set is available.
#[derive(Debug, Clone)]
pub struct QueryRow {
    pub query_id: String,
    values: Vec<RowValue>,
}

#[derive(Debug, Clone)]
enum RowValue {
    Plain(Result<f64>),
    Pair(Result<(f64, f64)>),
}

#[derive(Debug, Clone)]
pub struct PredictorOutput {
    pub table: PredictorTable,
    pub failures: Vec<Failure>,
}

struct MatrixCache<'a> {
    ranking: &'a ScoredRanking,
    similarity: SimilarityKind,
    sparse: BTreeMap<usize, Result<SimMatrix>>,
    dense: BTreeMap<usize, Result<SimMatrix>>,
}

impl<'a> MatrixCache<'a> {
    fn get(&mut self, store: &VectorStore, dense: bool, k: usize) -> Result<&SimMatrix> {
        let (ranking, kind) = (self.ranking, self.similarity);
        let map = if dense { &mut self.dense } else { &mut self.sparse };
        map.entry(k)
            .or_insert_with(|| build_sim_matrix(ranking, store, k, kind))
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn compute_single(
    p: Predictor,
    s: &PredictorSettings,
    ranking: &ScoredRanking,
    inputs: &PredictorInputs<'_>,
    cache: &mut MatrixCache<'_>,
) -> Result<f64> {
    let sparse = || inputs.sparse.ok_or_else(|| Error::MissingInput("sparse store".into()));
    let dense = || inputs.dense.ok_or_else(|| Error::MissingInput("dense store".into()));
    match p {
        Predictor::Max => Ok(max_score(ranking, s.k)),
        Predictor::Nqc => nqc(ranking, s.k),
        Predictor::Rsd => rsd_uni(ranking, s.k, &s.rsd),
        Predictor::Ac => autocorrelation(cache.get(sparse()?, false, s.k)?, ranking),
        Predictor::AcEmbs => autocorrelation(cache.get(dense()?, true, s.k)?, ranking),
        Predictor::Wand => Ok(wand(&prune_graph(cache.get(sparse()?, false, s.k)?)?)),
        Predictor::Wd => wd(&prune_graph(cache.get(sparse()?, false, s.k)?)?),
        Predictor::WandEmbs => Ok(wand(&prune_graph(cache.get(dense()?, true, s.k)?)?)),
        Predictor::WdEmbs => wd(&prune_graph(cache.get(dense()?, true, s.k)?)?),
        Predictor::PairRatio => pair_ratio(cache.get(dense()?, true, s.k)?, &s.pair_ratio),
        Predictor::APairRatio => {
            let qv = inputs
                .query_vecs
                .ok_or_else(|| Error::MissingInput("query vectors".into()))?;
            let theta = qv
                .dense(ranking.query_id())
                .ok_or_else(|| Error::MissingVector(ranking.query_id().to_string()))?;
            let store = dense()?;
            a_pair_ratio(cache.get(store, true, s.k)?, theta, store, &s.pair_ratio)
        }
        Predictor::WandNqc => compute_single(Predictor::Wand, s, ranking, inputs, cache),
        Predictor::WdNqc => compute_single(Predictor::Wd, s, ranking, inputs, cache),
    }
}

/// All requested predictors for one query. Independent of every other query,
/// so rows may be computed in parallel.
pub fn compute_row(inputs: &PredictorInputs<'_>, config: &PredictorConfig, query_id: &str) -> QueryRow {
    let Some(ranking) = inputs.rankings.get(query_id) else {
        let missing = || Error::MissingInput(format!("no ranking for `{query_id}`"));
        return QueryRow {
            query_id: query_id.to_string(),
            values: config
                .predictors
                .iter()
                .map(|p| {
                    if p.is_interpolated() {
                        RowValue::Pair(Err(missing()))
                    } else {
                        RowValue::Plain(Err(missing()))
                    }
                })
                .collect(),
        };
    };
    let mut cache = MatrixCache {
        ranking,
        similarity: config.similarity,
        sparse: BTreeMap::new(),
        dense: BTreeMap::new(),
    };
    let values = config
        .predictors
        .iter()
        .map(|&p| {
            let s = config.settings(p);
            let v = compute_single(p, &s, ranking, inputs, &mut cache);
            if p.is_interpolated() {
                RowValue::Pair(v.and_then(|c| Ok((c, nqc(ranking, s.k)?))))
            } else {
                RowValue::Plain(v)
            }
        })
        .collect();
    QueryRow {
        query_id: query_id.to_string(),
        values,
    }
}

/// Merges per-query rows into a table, performing the cross-query
/// interpolation step. Rows may arrive in any order.
pub fn assemble(config: &PredictorConfig, mut rows: Vec<QueryRow>) -> Result<PredictorOutput> {
    rows.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let mut failures = Vec::new();
    let mut columns: Vec<(String, Column)> = Vec::with_capacity(config.predictors.len());
    for (c, &p) in config.predictors.iter().enumerate() {
        let mut column = Column::new();
        if p.is_interpolated() {
            let mut coh = Column::new();
            let mut base = Column::new();
            for row in &rows {
                match &row.values[c] {
                    RowValue::Pair(Ok((a, b))) => {
                        coh.insert(row.query_id.clone(), *a);
                        base.insert(row.query_id.clone(), *b);
                    }
                    RowValue::Pair(Err(e)) | RowValue::Plain(Err(e)) => failures.push(Failure {
                        query_id: row.query_id.clone(),
                        predictor: p,
                        error: e.clone(),
                    }),
                    RowValue::Plain(Ok(_)) => unreachable!("interpolated predictor row"),
                }
            }
            let params = InterpolationParams::new(config.settings(p).lambda)?;
            match interpolate(&coh, &base, &params) {
                Ok(v) => column = v,
                Err(e) => failures.extend(coh.keys().map(|q| Failure {
                    query_id: q.clone(),
                    predictor: p,
                    error: e.clone(),
                })),
            }
        } else {
            for row in &rows {
                match &row.values[c] {
                    RowValue::Plain(Ok(v)) => {
                        column.insert(row.query_id.clone(), *v);
                    }
                    RowValue::Plain(Err(e)) | RowValue::Pair(Err(e)) => failures.push(Failure {
                        query_id: row.query_id.clone(),
                        predictor: p,
                        error: e.clone(),
                    }),
                    RowValue::Pair(Ok(_)) => unreachable!("plain predictor row"),
                }
            }
        }
        columns.push((p.name().to_string(), column));
    }
    let mut table = PredictorTable::new(columns.iter().map(|(n, _)| n.clone()).collect())?;
    for row in &rows {
        let values = columns.iter().map(|(_, c)| c.get(&row.query_id).copied()).collect();
        table.insert_row(row.query_id.clone(), values)?;
    }
    Ok(PredictorOutput { table, failures })
}

/// Every requested predictor for every ranking, sequentially.
pub fn compute_all(inputs: &PredictorInputs<'_>, config: &PredictorConfig) -> Result<PredictorOutput> {
    inputs.check(&config.predictors)?;
    for &p in &config.predictors {
        let s = config.settings(p);
        if p.uses_rsd() {
            s.rsd.validate()?;
        }
        InterpolationParams::new(s.lambda)?;
    }
    let rows = inputs
        .rankings
        .keys()
        .map(|q| compute_row(inputs, config, q))
        .collect();
    assemble(config, rows)
}

/// Convenience: one predictor column over a set of rankings.
pub fn compute_column(
    inputs: &PredictorInputs<'_>,
    predictor: Predictor,
    settings: PredictorSettings,
    similarity: SimilarityKind,
) -> Result<(Column, Vec<Failure>)> {
    let mut config = PredictorConfig::new(vec![predictor]);
    config.defaults = settings;
    config.similarity = similarity;
    let out = compute_all(inputs, &config)?;
    Ok((out.table.column(predictor.name())?, out.failures))
}
