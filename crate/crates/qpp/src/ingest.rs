//! Text formats: TREC runs and qrels, dense and sparse vector files, query
//! types, and TF-IDF construction from a tokenised corpus.
//!
//! Parsers take the whole file as a string plus a name used in error
//! messages. Blank lines are skipped; CRLF line endings are accepted.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use qpp_core::{DenseVector, QueryTypeMap, Qrels, ScoredRanking, SparseVector, VectorKind, VectorStore};

use crate::error::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_f64(file: &str, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(file, line, format!("{what} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(file, line, format!("{what} `{field}` is not finite")));
    }
    Ok(v)
}

/// Six-column TREC run: `qid Q0 docid rank score tag`. The rank column is
/// ignored; each query's documents are re-sorted by score, equal scores
/// keeping file order.
pub fn parse_run(text: &str, file: &str) -> Result<BTreeMap<String, ScoredRanking>> {
    let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::parse(file, n, format!("expected 6 fields, found {}", f.len())));
        }
        f[3].parse::<i64>()
            .map_err(|_| Error::parse(file, n, format!("rank `{}` is not an integer", f[3])))?;
        let score = parse_f64(file, n, f[4], "score")?;
        grouped
            .entry(f[0].to_string())
            .or_default()
            .push((f[2].to_string(), score));
    }
    grouped
        .into_iter()
        .map(|(q, docs)| {
            let r = ScoredRanking::new(q.clone(), docs)
                .map_err(|e| Error::core(format!("{file}: query `{q}`"), e))?;
            Ok((q, r))
        })
        .collect()
}

pub fn write_run(rankings: &BTreeMap<String, ScoredRanking>, tag: &str) -> String {
    let mut out = String::new();
    for (q, r) in rankings {
        for (i, e) in r.entries().iter().enumerate() {
            let _ = writeln!(out, "{q} Q0 {} {} {} {tag}", e.doc_id, i + 1, e.score);
        }
    }
    out
}

/// Parsed qrels plus the number of `(query, doc)` pairs judged more than
/// once (the last grade wins).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQrels {
    pub qrels: Qrels,
    pub duplicates: usize,
}

/// Four-column TREC qrels: `qid iter docid grade`.
pub fn parse_qrels(text: &str, file: &str) -> Result<ParsedQrels> {
    let mut qrels = Qrels::new();
    let mut duplicates = 0;
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::parse(file, n, format!("expected 4 fields, found {}", f.len())));
        }
        let grade: u32 = f[3].parse().map_err(|_| {
            Error::parse(file, n, format!("grade `{}` is not a non-negative integer", f[3]))
        })?;
        if qrels.insert(f[0], f[2], grade).is_some() {
            duplicates += 1;
        }
    }
    Ok(ParsedQrels { qrels, duplicates })
}

pub fn write_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (q, d, g) in qrels.iter() {
        let _ = writeln!(out, "{q} 0 {d} {g}");
    }
    out
}

/// `dim D` header followed by `id v1 .. vD` rows.
pub fn parse_dense_vectors(text: &str, file: &str) -> Result<VectorStore> {
    let mut lines = content_lines(text);
    let (hn, header) = lines
        .next()
        .ok_or_else(|| Error::parse(file, 1, "missing `dim D` header"))?;
    let dim = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["dim", d] => d
            .parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::parse(file, hn, format!("bad dimension `{d}`")))?,
        _ => return Err(Error::parse(file, hn, "missing `dim D` header")),
    };
    let mut store = VectorStore::new_dense(dim).map_err(|e| Error::core(file, e))?;
    for (n, line) in lines {
        let mut f = line.split_whitespace();
        let id = f.next().unwrap_or_default();
        let values = f
            .map(|v| parse_f64(file, n, v, "value"))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                file,
                n,
                format!("expected {dim} values for `{id}`, found {}", values.len()),
            ));
        }
        if store.contains(id) {
            return Err(Error::parse(file, n, format!("duplicate vector id `{id}`")));
        }
        let v = DenseVector::new(values).map_err(|e| Error::parse(file, n, e.to_string()))?;
        store
            .insert_dense(id, v)
            .map_err(|e| Error::parse(file, n, e.to_string()))?;
    }
    Ok(store)
}

/// `id term:weight ...` rows. A bare id is an empty vector.
pub fn parse_sparse_vectors(text: &str, file: &str) -> Result<VectorStore> {
    let mut store = VectorStore::new_sparse();
    for (n, line) in content_lines(text) {
        let mut f = line.split_whitespace();
        let id = f.next().unwrap_or_default();
        let mut comps = Vec::new();
        for tok in f {
            let (term, w) = tok
                .rsplit_once(':')
                .ok_or_else(|| Error::parse(file, n, format!("`{tok}` is not term:weight")))?;
            let w = parse_f64(file, n, w, "weight")?;
            if w < 0.0 {
                return Err(Error::parse(file, n, format!("negative weight for `{term}`")));
            }
            comps.push((term.to_string(), w));
        }
        if store.contains(id) {
            return Err(Error::parse(file, n, format!("duplicate vector id `{id}`")));
        }
        let v = SparseVector::new(comps).map_err(|e| Error::parse(file, n, e.to_string()))?;
        store
            .insert_sparse(id, v)
            .map_err(|e| Error::parse(file, n, e.to_string()))?;
    }
    Ok(store)
}

fn store_ids(store: &VectorStore) -> Vec<&str> {
    match store {
        VectorStore::Sparse(m) => m.keys().map(String::as_str).collect(),
        VectorStore::Dense { vectors, .. } => vectors.keys().map(String::as_str).collect(),
    }
}

/// Writes either kind in its own format.
pub fn write_vectors(store: &VectorStore) -> String {
    let mut out = String::new();
    if let Some(dim) = store.dim() {
        let _ = writeln!(out, "dim {dim}");
    }
    for id in store_ids(store) {
        out.push_str(id);
        match store.kind() {
            VectorKind::Dense => {
                for v in store.dense(id).map(DenseVector::values).unwrap_or_default() {
                    let _ = write!(out, " {v}");
                }
            }
            VectorKind::Sparse => {
                if let Some(v) = store.sparse(id) {
                    for (t, w) in v.components() {
                        let _ = write!(out, " {t}:{w}");
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

/// `qid<TAB>label` rows.
pub fn parse_query_types(text: &str, file: &str, strict: bool) -> Result<QueryTypeMap> {
    let mut map = QueryTypeMap::new();
    for (n, line) in content_lines(text) {
        let (q, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(file, n, "expected `qid<TAB>label`"))?;
        let (q, label) = (q.trim(), label.trim());
        if q.is_empty() || label.is_empty() {
            return Err(Error::parse(file, n, "empty query id or label"));
        }
        map.insert(q, label, strict)
            .map_err(|e| Error::parse(file, n, e.to_string()))?;
    }
    Ok(map)
}

pub fn write_query_types(map: &QueryTypeMap) -> String {
    let mut out = String::new();
    for (q, l) in map.iter() {
        let _ = writeln!(out, "{q}\t{l}");
    }
    out
}

/// Document count and per-term document frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    pub num_docs: usize,
    pub doc_freq: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn from_corpus<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a (String, Vec<String>)>,
    {
        let mut num_docs = 0;
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        for (_, tokens) in docs {
            num_docs += 1;
            let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *doc_freq.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        Self { num_docs, doc_freq }
    }
}

/// TF-IDF vectors with weight `tf * ln(N / df)`. Tokens are lower-cased;
/// terms present in every document get weight zero and are dropped.
pub fn build_tfidf(corpus: &[(String, Vec<String>)]) -> Result<VectorStore> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot build TF-IDF vectors from an empty corpus".into()));
    }
    let lowered: Vec<(String, Vec<String>)> = corpus
        .iter()
        .map(|(d, toks)| (d.clone(), toks.iter().map(|t| t.to_lowercase()).collect()))
        .collect();
    let stats = CorpusStats::from_corpus(&lowered);
    let n = stats.num_docs as f64;
    let mut store = VectorStore::new_sparse();
    for (doc, tokens) in &lowered {
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        let comps = tf.into_iter().filter_map(|(t, c)| {
            let df = stats.doc_freq[t] as f64;
            let w = c as f64 * (n / df).ln();
            (w > 0.0).then(|| (t.to_string(), w))
        });
        let v = SparseVector::new(comps).map_err(|e| Error::core(format!("document `{doc}`"), e))?;
        if store.contains(doc) {
            return Err(Error::Data(format!("duplicate document `{doc}` in corpus")));
        }
        store
            .insert_sparse(doc.clone(), v)
            .map_err(|e| Error::core(format!("document `{doc}`"), e))?;
    }
    Ok(store)
}

/// `docid tok tok ...` rows, one document per line.
pub fn parse_corpus(text: &str) -> Vec<(String, Vec<String>)> {
    content_lines(text)
        .map(|(_, l)| {
            let mut f = l.split_whitespace();
            let id = f.next().unwrap_or_default().to_string();
            (id, f.map(str::to_string).collect())
        })
        .collect()
}
