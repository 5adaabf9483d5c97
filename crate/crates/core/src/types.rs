//! Shared domain types: rankings, document vectors, judgments and per-query
//! tables. Everything here is immutable once built.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One retrieved document and its retrieval score.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// The ranked result list of a single query, sorted by non-increasing score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRanking {
    query_id: String,
    entries: Vec<RankedDoc>,
}

impl ScoredRanking {
    /// Validates and sorts a raw `(doc_id, score)` list. Equal scores keep
    /// their input order.
    pub fn new<I, S>(query_id: impl Into<String>, raw: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut entries: Vec<RankedDoc> = raw
            .into_iter()
            .map(|(d, score)| RankedDoc {
                doc_id: d.into(),
                score,
            })
            .collect();
        if entries.is_empty() {
            return Err(Error::EmptyRanking);
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::NonFinite(format!("score of `{}`", e.doc_id)));
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::DuplicateDoc(e.doc_id.clone()));
            }
        }
        // stable sort keeps input order among ties
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(Self {
            query_id: query_id.into(),
            entries,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn entries(&self) -> &[RankedDoc] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Always false; a ranking holds at least one entry.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The top `k` entries, or all of them when `k` exceeds the list length.
    pub fn head(&self, k: usize) -> &[RankedDoc] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn top_scores(&self, k: usize) -> Vec<f64> {
        self.head(k).iter().map(|e| e.score).collect()
    }

    /// Same ranking with every score multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            query_id: self.query_id.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| RankedDoc {
                    doc_id: e.doc_id.clone(),
                    score: e.score * factor,
                })
                .collect(),
        }
    }
}

/// Term-weight vector. Zero weights are never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    components: BTreeMap<String, f64>,
}

impl SparseVector {
    pub fn new<I, S>(components: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (term, w) in components {
            let term = term.into();
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("weight of term `{term}`")));
            }
            if w < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "negative weight {w} for term `{term}`"
                )));
            }
            if w > 0.0 {
                map.insert(term, w);
            } else {
                map.remove(&term);
            }
        }
        Ok(Self { components: map })
    }

    pub fn components(&self) -> &BTreeMap<String, f64> {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Inner product over shared terms (sorted merge).
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let mut a = self.components.iter().peekable();
        let mut b = other.components.iter().peekable();
        let mut acc = 0.0;
        while let (Some((ta, wa)), Some((tb, wb))) = (a.peek(), b.peek()) {
            match ta.cmp(tb) {
                core::cmp::Ordering::Less => {
                    a.next();
                }
                core::cmp::Ordering::Greater => {
                    b.next();
                }
                core::cmp::Ordering::Equal => {
                    acc += *wa * *wb;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|(t, w)| (t.clone(), w * factor))
                .filter(|(_, w)| *w > 0.0)
                .collect(),
        }
    }
}

/// Fixed-length embedding with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParams("dense vector must have dim >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("component {i}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    Sparse,
    Dense,
}

/// Document (or query) vectors keyed by id; either all sparse or all dense.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorStore {
    Sparse(BTreeMap<String, SparseVector>),
    Dense {
        dim: usize,
        vectors: BTreeMap<String, DenseVector>,
    },
}

impl VectorStore {
    pub fn new_sparse() -> Self {
        VectorStore::Sparse(BTreeMap::new())
    }

    pub fn new_dense(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("dense store dim must be positive".into()));
        }
        Ok(VectorStore::Dense {
            dim,
            vectors: BTreeMap::new(),
        })
    }

    pub fn kind(&self) -> VectorKind {
        match self {
            VectorStore::Sparse(_) => VectorKind::Sparse,
            VectorStore::Dense { .. } => VectorKind::Dense,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            VectorStore::Sparse(_) => None,
            VectorStore::Dense { dim, .. } => Some(*dim),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VectorStore::Sparse(m) => m.len(),
            VectorStore::Dense { vectors, .. } => vectors.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert_sparse(&mut self, id: impl Into<String>, v: SparseVector) -> Result<()> {
        match self {
            VectorStore::Sparse(m) => {
                m.insert(id.into(), v);
                Ok(())
            }
            VectorStore::Dense { .. } => Err(Error::KindMismatch(
                "sparse vector inserted into dense store".into(),
            )),
        }
    }

    pub fn insert_dense(&mut self, id: impl Into<String>, v: DenseVector) -> Result<()> {
        match self {
            VectorStore::Dense { dim, vectors } => {
                if v.dim() != *dim {
                    return Err(Error::DimMismatch {
                        expected: *dim,
                        found: v.dim(),
                    });
                }
                vectors.insert(id.into(), v);
                Ok(())
            }
            VectorStore::Sparse(_) => Err(Error::KindMismatch(
                "dense vector inserted into sparse store".into(),
            )),
        }
    }

    pub fn sparse(&self, id: &str) -> Option<&SparseVector> {
        match self {
            VectorStore::Sparse(m) => m.get(id),
            VectorStore::Dense { .. } => None,
        }
    }

    pub fn dense(&self, id: &str) -> Option<&DenseVector> {
        match self {
            VectorStore::Dense { vectors, .. } => vectors.get(id),
            VectorStore::Sparse(_) => None,
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        match self {
            VectorStore::Sparse(m) => m.contains_key(id),
            VectorStore::Dense { vectors, .. } => vectors.contains_key(id),
        }
    }

    /// Inner product between two stored vectors.
    pub fn dot(&self, a: &str, b: &str) -> Result<f64> {
        match self {
            VectorStore::Sparse(m) => {
                let va = m.get(a).ok_or_else(|| Error::MissingVector(a.to_string()))?;
                let vb = m.get(b).ok_or_else(|| Error::MissingVector(b.to_string()))?;
                Ok(va.dot(vb))
            }
            VectorStore::Dense { vectors, .. } => {
                let va = vectors
                    .get(a)
                    .ok_or_else(|| Error::MissingVector(a.to_string()))?;
                let vb = vectors
                    .get(b)
                    .ok_or_else(|| Error::MissingVector(b.to_string()))?;
                Ok(va.dot(vb))
            }
        }
    }

    /// Every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            VectorStore::Sparse(m) => VectorStore::Sparse(
                m.iter().map(|(k, v)| (k.clone(), v.scaled(factor))).collect(),
            ),
            VectorStore::Dense { dim, vectors } => VectorStore::Dense {
                dim: *dim,
                vectors: vectors
                    .iter()
                    .map(|(k, v)| (k.clone(), v.scaled(factor)))
                    .collect(),
            },
        }
    }
}

/// Graded relevance judgments, grouped by query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment; returns the previous grade if one was replaced.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        doc_id: impl Into<String>,
        grade: u32,
    ) -> Option<u32> {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments.iter().flat_map(|(q, docs)| {
            docs.iter().map(move |(d, g)| (q.as_str(), d.as_str(), *g))
        })
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-query values for one named predictor or metric.
pub type Column = BTreeMap<String, f64>;

/// Per-query values for an ordered set of named columns. Missing cells are
/// `None`; present cells are always finite.
///
/// Used for predictor estimates, effectiveness metrics and sARE values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryTable {
    names: Vec<String>,
    rows: BTreeMap<String, Vec<Option<f64>>>,
}

pub type PredictorTable = QueryTable;
pub type EffectivenessTable = QueryTable;
pub type SareTable = QueryTable;

impl QueryTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidParams(format!("duplicate column `{n}`")));
            }
        }
        Ok(Self {
            names,
            rows: BTreeMap::new(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &BTreeMap<String, Vec<Option<f64>>> {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn insert_row(&mut self, query_id: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        let query_id = query_id.into();
        if values.len() != self.names.len() {
            return Err(Error::DimMismatch {
                expected: self.names.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| matches!(v, Some(x) if !x.is_finite())) {
            return Err(Error::NonFinite(format!(
                "{query_id}/{}",
                self.names[i]
            )));
        }
        self.rows.insert(query_id, values);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Present values of one column, keyed by query id.
    pub fn column(&self, name: &str) -> Result<Column> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::MissingInput(format!("column `{name}`")))?;
        Ok(self
            .rows
            .iter()
            .filter_map(|(q, row)| row[idx].map(|v| (q.clone(), v)))
            .collect())
    }

    pub fn get(&self, query_id: &str, name: &str) -> Option<f64> {
        let idx = self.column_index(name)?;
        self.rows.get(query_id)?[idx]
    }

    /// Checks that every present value lies in `[0, 1]`, the range required of
    /// effectiveness metrics.
    pub fn validate_unit_range(&self) -> Result<()> {
        for (q, row) in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if let Some(x) = v {
                    if !(0.0..=1.0).contains(x) {
                        return Err(Error::InvalidParams(format!(
                            "{q}/{} = {x} outside [0,1]",
                            self.names[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds a table from named columns; queries missing from a column get
    /// `None` in that cell.
    pub fn from_columns(columns: Vec<(String, Column)>) -> Result<Self> {
        let names: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
        let mut table = Self::new(names)?;
        let queries: BTreeSet<&String> = columns.iter().flat_map(|(_, c)| c.keys()).collect();
        for q in queries {
            let row = columns.iter().map(|(_, c)| c.get(q).copied()).collect();
            table.insert_row(q.clone(), row)?;
        }
        Ok(table)
    }
}

/// The six question categories used as the between-query factor.
pub const QUERY_TYPES: [&str; 6] = [
    "Evidence-based",
    "Factoid",
    "Experience",
    "Instruction",
    "Reason",
    "Not a Question",
];

/// Query id to query-type label. Unknown labels are accepted unless strict
/// validation is requested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryTypeMap {
    assignment: BTreeMap<String, String>,
}

impl QueryTypeMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an assignment. Re-adding the same label is a no-op; a different
    /// label for a known query is rejected.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        label: impl Into<String>,
        strict: bool,
    ) -> Result<()> {
        let query_id = query_id.into();
        let label = label.into();
        if strict && !QUERY_TYPES.contains(&label.as_str()) {
            return Err(Error::UnknownLabel(label));
        }
        match self.assignment.get(&query_id) {
            Some(existing) if *existing != label => Err(Error::InvalidParams(format!(
                "query `{query_id}` labelled both `{existing}` and `{label}`"
            ))),
            Some(_) => Ok(()),
            None => {
                self.assignment.insert(query_id, label);
                Ok(())
            }
        }
    }

    pub fn get(&self, query_id: &str) -> Option<&str> {
        self.assignment.get(query_id).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignment.iter().map(|(q, l)| (q.as_str(), l.as_str()))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ids(r: &ScoredRanking) -> Vec<&str> {
        r.entries().iter().map(|e| e.doc_id.as_str()).collect()
    }

    #[test]
    fn ranking_sorted_descending() {
        let r = ScoredRanking::new("q", vec![("a", 0.5), ("b", 0.9)]).unwrap();
        assert_eq!(ids(&r), ["b", "a"]);
        assert_eq!(r.top_scores(2), [0.9, 0.5]);
    }

    #[test]
    fn ranking_rejects_duplicates() {
        let err = ScoredRanking::new("q", vec![("a", 1.0), ("a", 0.2)]).unwrap_err();
        assert_eq!(err, Error::DuplicateDoc("a".into()));
    }

    #[test]
    fn ranking_ties_keep_input_order() {
        let r = ScoredRanking::new("q", vec![("a", 0.7), ("b", 0.7)]).unwrap();
        assert_eq!(ids(&r), ["a", "b"]);
        let r = ScoredRanking::new("q", vec![("z", 0.1), ("b", 0.7), ("a", 0.7)]).unwrap();
        assert_eq!(ids(&r), ["b", "a", "z"]);
    }

    #[test]
    fn ranking_rejects_non_finite_and_empty() {
        assert!(matches!(
            ScoredRanking::new("q", vec![("a", f64::NAN)]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(
            ScoredRanking::new("q", Vec::<(String, f64)>::new()),
            Err(Error::EmptyRanking)
        );
    }

    #[test]
    fn head_beyond_length_is_full_list() {
        let r = ScoredRanking::new("q", vec![("a", 3.0), ("b", 2.0)]).unwrap();
        assert_eq!(r.head(10).len(), 2);
        assert_eq!(r.head(1).len(), 1);
    }

    #[test]
    fn sparse_vector_drops_zeros_and_rejects_negatives() {
        let v = SparseVector::new(vec![("cat", 1.5), ("dog", 0.0)]).unwrap();
        assert_eq!(v.len(), 1);
        assert!(SparseVector::new(vec![("cat", -1.0)]).is_err());
    }

    #[test]
    fn sparse_dot_over_shared_terms() {
        let a = SparseVector::new(vec![("cat", 2.0)]).unwrap();
        let b = SparseVector::new(vec![("cat", 3.0), ("dog", 1.0)]).unwrap();
        assert_eq!(a.dot(&b), 6.0);
        assert_eq!(b.dot(&a), 6.0);
    }

    #[test]
    fn dense_store_enforces_dim() {
        let mut s = VectorStore::new_dense(2).unwrap();
        s.insert_dense("a", DenseVector::new(vec![1.0, 2.0]).unwrap()).unwrap();
        let err = s
            .insert_dense("b", DenseVector::new(vec![1.0]).unwrap())
            .unwrap_err();
        assert_eq!(err, Error::DimMismatch { expected: 2, found: 1 });
        assert!(s.insert_sparse("c", SparseVector::default()).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn query_types_strict_and_conflicts() {
        let mut m = QueryTypeMap::new();
        m.insert("q1", "Factoid", true).unwrap();
        m.insert("q1", "Factoid", true).unwrap();
        assert!(m.insert("q1", "Reason", false).is_err());
        assert_eq!(
            m.insert("q2", "MyType", true),
            Err(Error::UnknownLabel("MyType".into()))
        );
        m.insert("q2", "MyType", false).unwrap();
        assert_eq!(m.get("q2"), Some("MyType"));
    }

    #[test]
    fn table_rejects_non_finite_and_bad_width() {
        let mut t = QueryTable::new(vec!["a".into(), "b".into()]).unwrap();
        assert!(t.insert_row("q", vec![Some(1.0)]).is_err());
        assert!(t.insert_row("q", vec![Some(1.0), Some(f64::NAN)]).is_err());
        t.insert_row("q", vec![Some(1.0), None]).unwrap();
        assert_eq!(t.column("b").unwrap().len(), 0);
        assert!(QueryTable::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn unit_range_check() {
        let mut t = QueryTable::new(vec!["m".into()]).unwrap();
        t.insert_row("q", vec![Some(1.2)]).unwrap();
        assert!(t.validate_unit_range().is_err());
    }
}
