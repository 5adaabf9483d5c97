//! Deterministic synthetic collection: rankings, judgments, document and
//! query embeddings, a tokenised corpus with its TF-IDF vectors, and query
//! types.
//!
//! Each query gets a hidden quality level. Documents carry a hidden
//! relevance; the higher the quality, the more the retrieval score follows
//! relevance and the more the relevant documents share one embedding
//! cluster and one topical vocabulary. Predictor values therefore track
//! effectiveness on this collection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use qpp_core::ScoredRanking;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{write_file, Error, Result};
use crate::ingest::{build_tfidf, write_run, write_vectors};

pub const DEFAULT_SEED: u64 = 20240711;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub num_queries: usize,
    pub docs_per_query: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            num_queries: 20,
            docs_per_query: 100,
            dim: 8,
            seed: DEFAULT_SEED,
        }
    }
}

pub const FIXTURE_TYPES: [&str; 4] = ["Factoid", "Reason", "Instruction", "Experience"];

const VOCAB: usize = 300;
const TOPIC_TERMS: usize = 8;
const DOC_LEN: usize = 30;
const CLUSTERS: usize = 16;

/// Generated files as `(file name, contents)`, in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub files: Vec<(String, String)>,
}

impl Fixture {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (name, contents) in &self.files {
            write_file(&dir.join(name), contents)?;
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn query_id(i: usize) -> String {
    format!("q{:02}", i + 1)
}

pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    if spec.num_queries < FIXTURE_TYPES.len() || spec.docs_per_query < 10 || spec.dim < 2 {
        return Err(Error::Usage(
            "fixture needs at least 4 queries, 10 documents per query and dimension 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nq = spec.num_queries;

    let mut quality: Vec<f64> = (0..nq).map(|i| (i as f64 + 0.5) / nq as f64).collect();
    quality.shuffle(&mut rng);

    let mut rankings = BTreeMap::new();
    let mut qrels = String::new();
    let mut doc_vectors = String::new();
    let mut query_vectors = String::new();
    let mut corpus: Vec<(String, Vec<String>)> = Vec::new();
    let mut types = String::new();
    let _ = writeln!(doc_vectors, "dim {}", spec.dim);
    let _ = writeln!(query_vectors, "dim {}", spec.dim);

    for (i, &w) in quality.iter().enumerate() {
        let q = query_id(i);
        let dir = unit(&mut rng, spec.dim);
        let theta: Vec<f64> = dir.iter().map(|x| round6(2.0 * x)).collect();
        // one on-topic cluster and a few distractors, all orthogonal to the query
        let clusters: Vec<Vec<f64>> = (0..CLUSTERS)
            .map(|_| {
                let mut c = unit(&mut rng, spec.dim);
                let proj = dot(&c, &dir);
                c.iter_mut().zip(&dir).for_each(|(x, d)| *x -= proj * d);
                let n = dot(&c, &c).sqrt();
                c.into_iter().map(|x| x / n).collect()
            })
            .collect();

        let topic: Vec<usize> = (0..TOPIC_TERMS).map(|_| rng.random_range(0..VOCAB)).collect();
        let mut docs = Vec::with_capacity(spec.docs_per_query);
        let mut judged = String::new();
        for j in 0..spec.docs_per_query {
            let d = format!("{q}_d{j:03}");
            let h: f64 = rng.random();
            let eps: f64 = rng.random();
            let align = 0.4 + 0.6 * w * h + 0.3 * (1.0 - w) * eps;
            let c = if rng.random::<f64>() < 0.1 + 0.9 * w * h {
                0
            } else {
                rng.random_range(1..CLUSTERS)
            };
            let phi: Vec<f64> = (0..spec.dim)
                .map(|t| round6(align * dir[t] + clusters[c][t] + 0.1 * gaussian(&mut rng)))
                .collect();
            let score = round6(dot(&phi, &theta));

            let p_topic = 0.1 + 0.6 * w * h;
            let tokens: Vec<String> = (0..DOC_LEN)
                .map(|_| {
                    let t = if rng.random::<f64>() < p_topic {
                        topic[rng.random_range(0..TOPIC_TERMS)]
                    } else {
                        rng.random_range(0..VOCAB)
                    };
                    format!("t{t:03}")
                })
                .collect();

            let grade = match h {
                h if h > 0.92 => 3,
                h if h > 0.82 => 2,
                h if h > 0.7 => 1,
                _ => 0,
            };
            if grade > 0 || rng.random::<f64>() < 0.1 {
                let _ = writeln!(judged, "{q} 0 {d} {grade}");
            }

            doc_vectors.push_str(&d);
            for v in &phi {
                let _ = write!(doc_vectors, " {v}");
            }
            doc_vectors.push('\n');
            corpus.push((d.clone(), tokens));
            docs.push((d, score));
        }
        qrels.push_str(&judged);
        query_vectors.push_str(&q);
        for v in &theta {
            let _ = write!(query_vectors, " {v}");
        }
        query_vectors.push('\n');
        let _ = writeln!(types, "{q}\t{}", FIXTURE_TYPES[i % FIXTURE_TYPES.len()]);
        let ranking = ScoredRanking::new(q.clone(), docs).map_err(|e| Error::core(&q, e))?;
        rankings.insert(q, ranking);
    }

    let half = nq / 2;
    let (a, b): (BTreeMap<_, _>, BTreeMap<_, _>) = rankings
        .iter()
        .map(|(q, r)| (q.clone(), r.clone()))
        .partition(|(q, _)| q.as_str() <= query_id(half - 1).as_str());
    let sparse = build_tfidf(&corpus)?;
    let mut corpus_text = String::new();
    for (d, toks) in &corpus {
        let _ = writeln!(corpus_text, "{d} {}", toks.join(" "));
    }
    let conf = "\
# inputs for `qpp predict --config pipeline.conf`
run = run.txt
sparse = sparse.txt
dense = dense.txt
query_vectors = queries.txt
seed = 42
";
    Ok(Fixture {
        files: vec![
            ("run.txt".into(), write_run(&rankings, "synthetic")),
            ("run_a.txt".into(), write_run(&a, "synthetic")),
            ("run_b.txt".into(), write_run(&b, "synthetic")),
            ("qrels.txt".into(), qrels),
            ("dense.txt".into(), doc_vectors),
            ("queries.txt".into(), query_vectors),
            ("corpus.txt".into(), corpus_text),
            ("sparse.txt".into(), write_vectors(&sparse)),
            ("query_types.tsv".into(), types),
            ("pipeline.conf".into(), conf.into()),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let spec = FixtureSpec::default();
        let f = generate(&spec).unwrap();
        assert_eq!(f, generate(&spec).unwrap());
        let run = crate::ingest::parse_run(f.get("run.txt").unwrap(), "run").unwrap();
        assert_eq!(run.len(), 20);
        assert!(run.values().all(|r| r.len() == 100));
        let a = crate::ingest::parse_run(f.get("run_a.txt").unwrap(), "a").unwrap();
        let b = crate::ingest::parse_run(f.get("run_b.txt").unwrap(), "b").unwrap();
        assert_eq!((a.len(), b.len()), (10, 10));
        assert!(a.keys().all(|q| q.as_str() <= "q10") && b.keys().all(|q| q.as_str() >= "q11"));
        let other = generate(&FixtureSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(f, other);
    }
}
