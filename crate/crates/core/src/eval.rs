//! Effectiveness metrics, Kendall's tau-b between per-query columns, and the
//! per-query scaled absolute rank error (sARE).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::stats::{descending_ranks, normal_two_sided_p};
use crate::types::{Column, EffectivenessTable, Qrels, ScoredRanking};

/// Default binarisation threshold for MAP and MRR on 0-3 graded judgments.
pub const DEFAULT_REL_THRESHOLD: u32 = 2;

fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// NDCG with raw-grade gains and `log2(rank + 1)` discount. Queries without a
/// judged relevant document score 0.
pub fn ndcg_at(ranking: &ScoredRanking, qrels: &Qrels, cutoff: usize) -> f64 {
    let Some(judged) = qrels.for_query(ranking.query_id()) else {
        return 0.0;
    };
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return 0.0;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let dcg: f64 = ranking
        .head(cutoff)
        .iter()
        .enumerate()
        .map(|(r, e)| {
            let g = judged.get(&e.doc_id).copied().unwrap_or(0);
            g as f64 / log2(r as f64 + 2.0)
        })
        .sum();
    let idcg: f64 = ideal
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(r, &g)| g as f64 / log2(r as f64 + 2.0))
        .sum();
    dcg / idcg
}

fn is_rel(qrels: &Qrels, query: &str, doc: &str, threshold: u32) -> bool {
    qrels.grade(query, doc).is_some_and(|g| g >= threshold)
}

/// Average precision over the top `cutoff`, normalised by the total number
/// of relevant documents in the judgments.
pub fn map_at(ranking: &ScoredRanking, qrels: &Qrels, cutoff: usize, rel_threshold: u32) -> f64 {
    let q = ranking.query_id();
    let total_rel = qrels
        .for_query(q)
        .map(|m| m.values().filter(|&&g| g >= rel_threshold).count())
        .unwrap_or(0);
    if total_rel == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, e) in ranking.head(cutoff).iter().enumerate() {
        if is_rel(qrels, q, &e.doc_id, rel_threshold) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    sum / total_rel as f64
}

/// Reciprocal rank of the first relevant document within `cutoff`.
pub fn mrr_at(ranking: &ScoredRanking, qrels: &Qrels, cutoff: usize, rel_threshold: u32) -> f64 {
    let q = ranking.query_id();
    ranking
        .head(cutoff)
        .iter()
        .position(|e| is_rel(qrels, q, &e.doc_id, rel_threshold))
        .map_or(0.0, |r| 1.0 / (r + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    Ndcg,
    Map,
    Mrr,
}

/// A metric with its cutoff, written `NDCG@10`, `MAP@100`, `MRR@10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Metric {
    pub kind: MetricKind,
    pub cutoff: usize,
}

impl Metric {
    pub const DEFAULTS: [Metric; 3] = [
        Metric { kind: MetricKind::Ndcg, cutoff: 10 },
        Metric { kind: MetricKind::Map, cutoff: 100 },
        Metric { kind: MetricKind::Mrr, cutoff: 10 },
    ];

    pub fn evaluate(&self, ranking: &ScoredRanking, qrels: &Qrels, rel_threshold: u32) -> f64 {
        match self.kind {
            MetricKind::Ndcg => ndcg_at(ranking, qrels, self.cutoff),
            MetricKind::Map => map_at(ranking, qrels, self.cutoff, rel_threshold),
            MetricKind::Mrr => mrr_at(ranking, qrels, self.cutoff, rel_threshold),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MetricKind::Ndcg => "NDCG",
            MetricKind::Map => "MAP",
            MetricKind::Mrr => "MRR",
        };
        write!(f, "{name}@{}", self.cutoff)
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("unknown metric `{s}` (expected e.g. NDCG@10)"));
        let (name, cutoff) = s.trim().split_once('@').ok_or_else(bad)?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "ndcg" => MetricKind::Ndcg,
            "map" | "ap" => MetricKind::Map,
            "mrr" | "rr" => MetricKind::Mrr,
            _ => return Err(bad()),
        };
        let cutoff: usize = cutoff.parse().map_err(|_| bad())?;
        if cutoff == 0 {
            return Err(bad());
        }
        Ok(Metric { kind, cutoff })
    }
}

/// Result of [`evaluate`]: the table plus the queries that had no judgments.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub table: EffectivenessTable,
    pub dropped_queries: Vec<String>,
}

/// Per-query effectiveness for every ranking whose query has judgments.
pub fn evaluate(
    rankings: &BTreeMap<String, ScoredRanking>,
    qrels: &Qrels,
    metrics: &[Metric],
    rel_threshold: u32,
) -> Result<Evaluation> {
    let mut table = EffectivenessTable::new(metrics.iter().map(|m| m.to_string()).collect())?;
    let mut dropped_queries = Vec::new();
    for (q, r) in rankings {
        if !qrels.contains_query(q) {
            dropped_queries.push(q.clone());
            continue;
        }
        let row = metrics
            .iter()
            .map(|m| Some(m.evaluate(r, qrels, rel_threshold)))
            .collect();
        table.insert_row(q.clone(), row)?;
    }
    table.validate_unit_range()?;
    Ok(Evaluation {
        table,
        dropped_queries,
    })
}

/// Pair counts behind tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n: u64,
    /// Concordant minus discordant pairs.
    pub s: i64,
    /// Pairs not tied in x (`C + D + ties only in y`).
    pub untied_x: u64,
    /// Pairs not tied in y (`C + D + ties only in x`).
    pub untied_y: u64,
    /// Tie-group size sums used by the null variance of `s`.
    pub tie_x: TieSums,
    pub tie_y: TieSums,
}

/// Sums over tie groups of size `t`: `t(t-1)`, `t(t-1)(t-2)` and
/// `t(t-1)(2t+5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TieSums {
    pub pairs2: u64,
    pub triples: u64,
    pub v: u64,
}

impl TieSums {
    fn add_group(&mut self, t: u64) {
        if t > 1 {
            self.pairs2 += t * (t - 1);
            self.triples += t * (t - 1) * (t - 2);
            self.v += t * (t - 1) * (2 * t + 5);
        }
    }

    fn tied_pairs(&self) -> u64 {
        self.pairs2 / 2
    }
}

fn tie_sums_sorted(sorted: &[f64]) -> TieSums {
    let mut sums = TieSums::default();
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            sums.add_group(run);
            run = 1;
        }
    }
    sums.add_group(run);
    sums
}

/// Merge sort on `ys`, returning the number of inversions (pairs with
/// `i < j`, `ys[i] > ys[j]`).
fn count_inversions(ys: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = ys.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = ys.split_at_mut(mid);
    let mut swaps = count_inversions(left, &mut buf[..mid]) + count_inversions(right, &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if right[j] < left[i] {
            buf[k] = right[j];
            swaps += (left.len() - i) as u64;
            j += 1;
        } else {
            buf[k] = left[i];
            i += 1;
        }
        k += 1;
    }
    while i < left.len() {
        buf[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buf[k] = right[j];
        j += 1;
        k += 1;
    }
    ys.copy_from_slice(&buf[..n]);
    swaps
}

/// Pair counts in `O(n log n)` (Knight's algorithm).
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimMismatch { expected: n, found: y.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kendall input".into()));
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let tie_x = tie_sums_sorted(&xs);
    // pairs tied in both
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys.clone();
    let swaps = count_inversions(&mut ys, &mut buf);
    let tie_y = tie_sums_sorted(&ys);

    let n0 = n as u64 * (n as u64).saturating_sub(1) / 2;
    let n1 = tie_x.tied_pairs();
    let n2 = tie_y.tied_pairs();
    let s = n0 as i64 - n1 as i64 - n2 as i64 + joint as i64 - 2 * swaps as i64;
    Ok(PairCounts {
        n: n as u64,
        s,
        untied_x: n0 - n1,
        untied_y: n0 - n2,
        tie_x,
        tie_y,
    })
}

/// tau-b from pair counts. This is the single arithmetic path shared by every
/// way of producing the counts.
pub fn tau_b_from_counts(c: &PairCounts) -> Result<f64> {
    if c.untied_x == 0 || c.untied_y == 0 {
        return Err(Error::Degenerate("all values tied; Kendall's tau undefined".into()));
    }
    Ok(c.s as f64 / libm::sqrt(c.untied_x as f64 * c.untied_y as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallResult {
    pub tau: f64,
    /// Two-sided p-value from the tie-corrected normal approximation.
    pub p_value: f64,
    pub n: usize,
}

impl KendallResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Kendall's tau-b between two equal-length vectors.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InvalidParams("Kendall's tau needs at least 2 values".into()));
    }
    tau_b_from_counts(&pair_counts(x, y)?)
}

/// tau-b plus its normal-approximation p-value.
pub fn kendall_test(x: &[f64], y: &[f64]) -> Result<KendallResult> {
    if x.len() < 2 {
        return Err(Error::InvalidParams("Kendall's tau needs at least 2 values".into()));
    }
    let c = pair_counts(x, y)?;
    let tau = tau_b_from_counts(&c)?;
    let n = c.n as f64;
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let var_s = (v0 - c.tie_x.v as f64 - c.tie_y.v as f64) / 18.0
        + (c.tie_x.triples as f64 * c.tie_y.triples as f64) / (9.0 * n * (n - 1.0) * (n - 2.0)).max(f64::MIN_POSITIVE)
        + (c.tie_x.pairs2 as f64 * c.tie_y.pairs2 as f64) / (2.0 * n * (n - 1.0));
    let p_value = if var_s > 0.0 {
        normal_two_sided_p(c.s as f64 / libm::sqrt(var_s))
    } else {
        1.0
    };
    Ok(KendallResult {
        tau,
        p_value,
        n: x.len(),
    })
}

/// Aligns two per-query columns on the queries present in both.
pub fn paired(a: &Column, b: &Column) -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let mut ids = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (q, x) in a {
        if let Some(y) = b.get(q) {
            ids.push(q.clone());
            xs.push(*x);
            ys.push(*y);
        }
    }
    (ids, xs, ys)
}

/// Kendall test between two columns after dropping queries missing from
/// either.
pub fn kendall_columns(predictor: &Column, metric: &Column) -> Result<KendallResult> {
    let (_, x, y) = paired(predictor, metric);
    kendall_test(&x, &y)
}

/// `|r_p - r_e| / |Q|` per query, ranks by descending value with average
/// ranks for ties. Only queries present in both columns take part.
pub fn sare(predictor: &Column, effectiveness: &Column) -> Result<Column> {
    let (ids, x, y) = paired(predictor, effectiveness);
    if ids.len() < 2 {
        return Err(Error::InvalidParams(
            "sARE needs at least two queries present in both columns".into(),
        ));
    }
    let n = ids.len() as f64;
    let rp = descending_ranks(&x);
    let re = descending_ranks(&y);
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, q)| (q, libm::fabs(rp[i] - re[i]) / n))
        .collect())
}

/// sARE for every predictor column against one metric column.
pub fn sare_table(
    predictors: &crate::types::PredictorTable,
    effectiveness: &Column,
) -> Result<crate::types::SareTable> {
    let mut cols = Vec::new();
    for name in predictors.names() {
        let col = predictors.column(name)?;
        cols.push((name.to_string(), sare(&col, effectiveness)?));
    }
    crate::types::QueryTable::from_columns(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn run(q: &str, docs: &[&str]) -> ScoredRanking {
        ScoredRanking::new(q, docs.iter().enumerate().map(|(i, d)| (*d, 100.0 - i as f64))).unwrap()
    }

    fn qrels(q: &str, grades: &[(&str, u32)]) -> Qrels {
        let mut qr = Qrels::new();
        for (d, g) in grades {
            qr.insert(q, *d, *g);
        }
        qr
    }

    #[test]
    fn ndcg_hand_example() {
        let qr = qrels("q", &[("a", 0), ("b", 2), ("c", 1)]);
        let v = ndcg_at(&run("q", &["a", "b", "c"]), &qr, 10);
        let dcg = 2.0 / libm::log2(3.0) + 0.5;
        let idcg = 2.0 + 1.0 / libm::log2(3.0);
        assert!((v - dcg / idcg).abs() < 1e-12);
        assert!((v - 0.6697).abs() < 1e-4);
        assert_eq!(ndcg_at(&run("q", &["b", "c", "a"]), &qr, 10), 1.0);
        assert_eq!(ndcg_at(&run("q", &["a"]), &qrels("q", &[("a", 0)]), 10), 0.0);
        assert_eq!(ndcg_at(&run("other", &["a"]), &qr, 10), 0.0);
    }

    #[test]
    fn map_examples() {
        let qr = qrels("q", &[("a", 2), ("c", 3), ("b", 1)]);
        let v = map_at(&run("q", &["a", "b", "c"]), &qr, 100, 2);
        assert!((v - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(map_at(&run("q", &["x", "y"]), &qr, 100, 2), 0.0);
        assert_eq!(map_at(&run("q", &["c", "a", "b"]), &qr, 100, 2), 1.0);
    }

    #[test]
    fn mrr_examples() {
        let qr = qrels("q", &[("b", 2)]);
        assert_eq!(mrr_at(&run("q", &["a", "b"]), &qr, 10, 2), 0.5);
        assert_eq!(mrr_at(&run("q", &["b"]), &qr, 10, 2), 1.0);
        let docs: Vec<String> = (0..11).map(|i| alloc::format!("x{i}")).collect();
        let mut names: Vec<&str> = docs.iter().map(String::as_str).collect();
        names.push("b");
        assert_eq!(mrr_at(&run("q", &names), &qr, 10, 2), 0.0);
    }

    #[test]
    fn metric_parsing() {
        let m: Metric = "ndcg@10".parse().unwrap();
        assert_eq!(m, Metric { kind: MetricKind::Ndcg, cutoff: 10 });
        assert_eq!(m.to_string(), "NDCG@10");
        assert!("P@10".parse::<Metric>().is_err());
        assert!("MAP@0".parse::<Metric>().is_err());
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        let t = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap(), -1.0);
        assert!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn kendall_with_ties_matches_textbook() {
        // x = [1,2,2,3], y = [1,3,2,3]: C=4, D=0, ties only x = 1, only y = 1
        let t = kendall_tau(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 3.0]).unwrap();
        assert!((t - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn kendall_p_value_perfect() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let r = kendall_test(&x, &x).unwrap();
        assert_eq!(r.tau, 1.0);
        assert!(r.significant(0.05));
        let r = kendall_test(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!(!r.significant(0.05));
    }

    fn col(vals: &[f64]) -> Column {
        vals.iter()
            .enumerate()
            .map(|(i, v)| (alloc::format!("q{i}"), *v))
            .collect()
    }

    #[test]
    fn sare_examples() {
        let e = col(&[0.9, 0.7, 0.5, 0.1]);
        let same = sare(&col(&[4.0, 3.0, 2.0, 1.0]), &e).unwrap();
        assert!(same.values().all(|&v| v == 0.0));
        let rev = sare(&col(&[1.0, 2.0, 3.0, 4.0]), &e).unwrap();
        assert_eq!(rev.values().copied().collect::<Vec<_>>(), [0.75, 0.25, 0.25, 0.75]);
    }

    #[test]
    fn sare_ten_queries() {
        // q0 ranked 3rd by predictor, 1st by metric
        let e = col(&[1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        let p = col(&[8.0, 10.0, 9.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let s = sare(&p, &e).unwrap();
        assert!((s["q0"] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sare_bounds() {
        let e = col(&[0.3, 0.1, 0.2, 0.3, 0.9]);
        let p = col(&[1.0, 1.0, 5.0, 0.0, 2.0]);
        let s = sare(&p, &e).unwrap();
        assert!(s.values().all(|&v| (0.0..=4.0 / 5.0).contains(&v)));
        assert!(sare(&col(&[1.0]), &col(&[1.0])).is_err());
    }

    #[test]
    fn evaluate_drops_unjudged_queries() {
        let mut rk = BTreeMap::new();
        rk.insert("q".to_string(), run("q", &["a"]));
        rk.insert("z".to_string(), run("z", &["a"]));
        let ev = evaluate(&rk, &qrels("q", &[("a", 3)]), &Metric::DEFAULTS, 2).unwrap();
        assert_eq!(ev.dropped_queries, vec!["z".to_string()]);
        assert_eq!(ev.table.get("q", "NDCG@10"), Some(1.0));
    }
}
