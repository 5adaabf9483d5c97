//! Pairwise similarity matrices over the top-ranked documents, the
//! query-adjusted matrix and the mean-thresholded coherence graph.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::types::{DenseVector, ScoredRanking, VectorKind, VectorStore};

/// Where a similarity matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sparse,
    Dense,
    Adjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimilarityKind {
    #[default]
    InnerProduct,
    Cosine,
}

/// Symmetric `k x k` similarity matrix, rows in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    k: usize,
    entries: Vec<f64>,
    doc_ids: Vec<String>,
    provenance: Provenance,
}

impl SimMatrix {
    /// Builds a matrix from its upper triangle by mirroring. `upper(i, j)` is
    /// called once for every `i <= j`.
    fn from_upper(
        doc_ids: Vec<String>,
        provenance: Provenance,
        mut upper: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let k = doc_ids.len();
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let v = upper(i, j)?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(alloc::format!("similarity ({i},{j})")));
                }
                entries[i * k + j] = v;
                entries[j * k + i] = v;
            }
        }
        Ok(Self {
            k,
            entries,
            doc_ids,
            provenance,
        })
    }

    /// Matrix from explicit row-major entries. The input must be square and
    /// symmetric.
    pub fn from_rows(
        doc_ids: Vec<String>,
        rows: &[Vec<f64>],
        provenance: Provenance,
    ) -> Result<Self> {
        let k = doc_ids.len();
        if k == 0 || rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParams("matrix must be k x k with k >= 1".into()));
        }
        for i in 0..k {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::InvalidParams(alloc::format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Self::from_upper(doc_ids, provenance, |i, j| Ok(rows[i][j]))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `W * v` including the diagonal.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|i| self.row(i).iter().zip(v).map(|(w, x)| w * x).sum())
            .collect()
    }

    /// Mean of the off-diagonal entries of the principal submatrix over the
    /// 0-based inclusive index range `[lo, hi]`, each unordered pair once.
    pub fn block_mean(&self, lo: usize, hi: usize) -> Option<f64> {
        if hi >= self.k || hi <= lo {
            return None;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in lo..=hi {
            for j in (i + 1)..=hi {
                sum += self.get(i, j);
                n += 1;
            }
        }
        Some(sum / n as f64)
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k: self.k,
            entries: self.entries.iter().map(|v| v * factor).collect(),
            doc_ids: self.doc_ids.clone(),
            provenance: self.provenance,
        }
    }
}

/// Pairwise similarities of the top-`k` documents of `ranking`.
pub fn build_sim_matrix(
    ranking: &ScoredRanking,
    store: &VectorStore,
    k: usize,
    kind: SimilarityKind,
) -> Result<SimMatrix> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be positive".into()));
    }
    let doc_ids: Vec<String> = ranking.head(k).iter().map(|e| e.doc_id.clone()).collect();
    if let Some(missing) = doc_ids.iter().find(|d| !store.contains(d)) {
        return Err(Error::MissingVector(missing.clone()));
    }
    let norms: Vec<f64> = match kind {
        SimilarityKind::InnerProduct => Vec::new(),
        SimilarityKind::Cosine => doc_ids
            .iter()
            .map(|d| store.dot(d, d).map(libm::sqrt))
            .collect::<Result<_>>()?,
    };
    let provenance = match store.kind() {
        VectorKind::Sparse => Provenance::Sparse,
        VectorKind::Dense => Provenance::Dense,
    };
    let ids = doc_ids.clone();
    SimMatrix::from_upper(doc_ids, provenance, |i, j| {
        let dot = store.dot(&ids[i], &ids[j])?;
        Ok(match kind {
            SimilarityKind::InnerProduct => dot,
            SimilarityKind::Cosine => {
                let denom = norms[i] * norms[j];
                if denom > 0.0 {
                    dot / denom
                } else {
                    0.0
                }
            }
        })
    })
}

/// Reweights each entry by the query's inner product with both documents:
/// `A[i][j] = W[i][j] * (phi_i . theta) * (phi_j . theta)`.
pub fn adjust_matrix(
    w: &SimMatrix,
    query_vec: &DenseVector,
    store: &VectorStore,
) -> Result<SimMatrix> {
    if w.provenance() != Provenance::Dense {
        return Err(Error::KindMismatch(
            "query adjustment needs a dense similarity matrix".into(),
        ));
    }
    let dim = store
        .dim()
        .ok_or_else(|| Error::KindMismatch("query adjustment needs a dense store".into()))?;
    if query_vec.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            found: query_vec.dim(),
        });
    }
    let qdots: Vec<f64> = w
        .doc_ids()
        .iter()
        .map(|d| {
            store
                .dense(d)
                .map(|v| v.dot(query_vec))
                .ok_or_else(|| Error::MissingVector(d.clone()))
        })
        .collect::<Result<_>>()?;
    SimMatrix::from_upper(w.doc_ids().to_vec(), Provenance::Adjusted, |i, j| {
        Ok(w.get(i, j) * qdots[i] * qdots[j])
    })
}

/// Undirected coherence graph over the `k` documents of a similarity matrix,
/// keeping only pairs whose similarity is strictly above the mean pairwise
/// similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedGraph {
    k: usize,
    adjacency: Vec<BTreeSet<usize>>,
    edge_weights: BTreeMap<(usize, usize), f64>,
    threshold: f64,
}

impl PrunedGraph {
    /// Graph from an explicit edge list; used for tests and brute-force
    /// comparisons. Edges are `(i, j)` with `i != j`, 0-based.
    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![BTreeSet::new(); k];
        let mut edge_weights = BTreeMap::new();
        for &(a, b) in edges {
            if a == b || a >= k || b >= k {
                return Err(Error::InvalidParams(alloc::format!("bad edge ({a},{b})")));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
            edge_weights.insert((a.min(b), a.max(b)), 1.0);
        }
        Ok(Self {
            k,
            adjacency,
            edge_weights,
            threshold: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn neighbours(&self, i: usize) -> &BTreeSet<usize> {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_weights.len()
    }

    /// Kept edges `(i, j)` with `i < j` and their similarity.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edge_weights.iter().map(|(e, w)| (*e, *w))
    }
}

/// Prunes the fully connected similarity graph at the mean off-diagonal
/// similarity (strict `>`; the diagonal is never considered).
pub fn prune_graph(w: &SimMatrix) -> Result<PrunedGraph> {
    let k = w.k();
    if k < 2 {
        return Err(Error::InvalidParams(
            "graph pruning needs at least two documents".into(),
        ));
    }
    let threshold = w.block_mean(0, k - 1).expect("k >= 2");
    let mut adjacency = vec![BTreeSet::new(); k];
    let mut edge_weights = BTreeMap::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let s = w.get(i, j);
            if s > threshold {
                adjacency[i].insert(j);
                adjacency[j].insert(i);
                edge_weights.insert((i, j), s);
            }
        }
    }
    Ok(PrunedGraph {
        k,
        adjacency,
        edge_weights,
        threshold,
    })
}

/// Writes the matrix as `k` lines of comma-separated values in rank order.
/// Values use the shortest representation that round-trips exactly.
pub fn write_matrix_csv<W: core::fmt::Write>(w: &SimMatrix, sink: &mut W) -> core::fmt::Result {
    for i in 0..w.k() {
        for (j, v) in w.row(i).iter().enumerate() {
            if j > 0 {
                sink.write_char(',')?;
            }
            write!(sink, "{v}")?;
        }
        sink.write_char('\n')?;
    }
    Ok(())
}
