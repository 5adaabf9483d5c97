use std::collections::BTreeMap;

use proptest::prelude::*;
use qpp::ingest::*;
use qpp::Error;
use qpp_core::{DenseVector, QueryTypeMap, Qrels, ScoredRanking, SparseVector, VectorStore};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), Just(1e-300), Just(-2.5e17)]
}

fn rankings() -> impl Strategy<Value = BTreeMap<String, ScoredRanking>> {
    prop::collection::btree_map(
        "q[0-9]{1,3}",
        prop::collection::vec(finite(), 1..20),
        0..6,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|(q, scores)| {
                let docs = scores.into_iter().enumerate().map(|(i, s)| (format!("{q}-d{i}"), s));
                let r = ScoredRanking::new(q.clone(), docs).unwrap();
                (q, r)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn run_round_trip(runs in rankings()) {
        let text = write_run(&runs, "tag");
        prop_assert_eq!(parse_run(&text, "r").unwrap(), runs.clone());
        let crlf = text.replace('\n', "\r\n");
        prop_assert_eq!(parse_run(&crlf, "r").unwrap(), runs);
    }

    #[test]
    fn qrels_round_trip(j in prop::collection::btree_map(("q[0-9]", "d[0-9]{1,2}"), 0u32..4, 0..30)) {
        let mut qrels = Qrels::new();
        for ((q, d), g) in &j {
            qrels.insert(q.clone(), d.clone(), *g);
        }
        let parsed = parse_qrels(&write_qrels(&qrels), "q").unwrap();
        prop_assert_eq!(parsed.qrels, qrels);
        prop_assert_eq!(parsed.duplicates, 0);
    }

    #[test]
    fn dense_round_trip(dim in 1usize..6, rows in prop::collection::btree_map("[a-z][a-z0-9]{0,5}", prop::collection::vec(finite(), 6), 0..8)) {
        let mut store = VectorStore::new_dense(dim).unwrap();
        for (id, v) in &rows {
            store.insert_dense(id.clone(), DenseVector::new(v[..dim].to_vec()).unwrap()).unwrap();
        }
        prop_assert_eq!(parse_dense_vectors(&write_vectors(&store), "v").unwrap(), store);
    }

    #[test]
    fn sparse_round_trip(rows in prop::collection::btree_map("[a-z][a-z0-9]{0,5}", prop::collection::btree_map("[a-z]{1,4}", 0.0..100.0f64, 0..6), 0..8)) {
        let mut store = VectorStore::new_sparse();
        for (id, comps) in &rows {
            store.insert_sparse(id.clone(), SparseVector::new(comps.clone()).unwrap()).unwrap();
        }
        prop_assert_eq!(parse_sparse_vectors(&write_vectors(&store), "v").unwrap(), store);
    }

    #[test]
    fn query_types_round_trip(m in prop::collection::btree_map("q[0-9]{1,3}", prop::sample::select(vec!["Factoid", "Reason", "Experience"]), 0..10)) {
        let mut map = QueryTypeMap::new();
        for (q, l) in &m {
            map.insert(q.clone(), *l, true).unwrap();
        }
        prop_assert_eq!(parse_query_types(&write_query_types(&map), "t", true).unwrap(), map);
    }
}

fn line_of(e: Error) -> usize {
    match e {
        Error::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn malformed_lines_report_their_number() {
    let run = "q1 Q0 a 1 2.0 t\n\nq1 Q0 b 2 x t\n";
    assert_eq!(line_of(parse_run(run, "r").unwrap_err()), 3);
    assert_eq!(line_of(parse_run("q1 Q0 a one 2.0 t", "r").unwrap_err()), 1);
    assert_eq!(line_of(parse_qrels("q1 0 d1 1\nq1 0 d2", "q").unwrap_err()), 2);
    assert_eq!(line_of(parse_dense_vectors("dim 2\na 1 2\nb 1", "v").unwrap_err()), 3);
    assert_eq!(line_of(parse_dense_vectors("a 1 2", "v").unwrap_err()), 1);
    assert_eq!(line_of(parse_sparse_vectors("a x:1\nb y", "v").unwrap_err()), 2);
    assert_eq!(line_of(parse_query_types("q1 Factoid", "t", false).unwrap_err()), 1);
}

#[test]
fn duplicate_doc_in_run_names_it() {
    let err = parse_run("q1 Q0 d1 1 2 t\nq1 Q0 d1 2 1 t", "r").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("d1") && msg.contains("q1"), "{msg}");
}

#[test]
fn run_order_follows_score_not_rank_column() {
    let runs = parse_run("q1 Q0 low 1 0.5 t\nq1 Q0 high 2 9.5 t\n", "r").unwrap();
    let ids: Vec<_> = runs["q1"].entries().iter().map(|e| e.doc_id.clone()).collect();
    assert_eq!(ids, ["high", "low"]);
}

#[test]
fn tfidf_matches_hand_weights() {
    let corpus = parse_corpus("d1 Cat cat dog\nd2 dog bird\nd3 bird\n");
    let s = build_tfidf(&corpus).unwrap();
    let d1 = s.sparse("d1").unwrap().components();
    assert!((d1["cat"] - 2.0 * (3.0f64 / 1.0).ln()).abs() < 1e-15);
    assert!((d1["dog"] - (3.0f64 / 2.0).ln()).abs() < 1e-15);
    let stats = CorpusStats::from_corpus(&corpus);
    assert_eq!(stats.num_docs, 3);
    assert_eq!(stats.doc_freq["bird"], 2);
}
