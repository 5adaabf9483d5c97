use std::path::{Path, PathBuf};
use std::process::Command;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn qpp(args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_qpp"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn qpp");
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn fx(name: &str) -> String {
    fixture().join(name).display().to_string()
}

fn body_lines(s: &str) -> Vec<&str> {
    s.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn bundled_fixture_matches_generator() {
    let generated = qpp::fixture::generate(&qpp::fixture::FixtureSpec::default()).unwrap();
    for (name, contents) in &generated.files {
        let on_disk = std::fs::read_to_string(fixture().join(name)).unwrap();
        assert!(on_disk == *contents, "{name} differs from the generator output");
    }
}

#[test]
fn predict_max_only_gives_one_column() {
    let o = qpp(&["predict", "--run", &fx("run.txt"), "--predictors", "Max"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let lines = body_lines(&o.stdout);
    assert_eq!(lines[0], "query\tMax");
    assert_eq!(lines.len(), 21);
    assert!(o.stdout.starts_with("# qpp "));
    assert!(o.stdout.contains("# seed=42\n"));
}

#[test]
fn predict_all_on_fixture_has_no_gaps() {
    let o = qpp(&["predict", "--config", &fx("pipeline.conf")]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let lines = body_lines(&o.stdout);
    assert_eq!(lines[0].split('\t').count(), 14);
    assert!(!o.stdout.contains("NA"));
}

#[test]
fn missing_dense_store_is_a_usage_error_before_reading() {
    let o = qpp(&["predict", "--run", "/nonexistent/run.txt", "--predictors", "AC-embs"]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    assert!(o.stderr.contains("AC-embs") && o.stderr.contains("--dense"), "{}", o.stderr);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "q1 Q0 d1 1 notanumber run\n").unwrap();
    let o = qpp(&["predict", "--run", bad.to_str().unwrap(), "--predictors", "Max"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 1"), "{}", o.stderr);

    assert_eq!(qpp(&["predict", "--no-such-flag"]).code, 1);
    assert_eq!(qpp(&[]).code, 1);
    assert_eq!(qpp(&["--help"]).code, 0);
    assert_eq!(qpp(&["predict", "--predictors", "Max"]).code, 1);

    let zero_mean = dir.path().join("zero.txt");
    std::fs::write(&zero_mean, "q1 Q0 a 1 1 r\nq1 Q0 b 2 -1 r\nq2 Q0 a 1 3 r\nq2 Q0 b 2 1 r\n").unwrap();
    let out = dir.path().join("p.tsv");
    let o = qpp(&[
        "predict", "--run", zero_mean.to_str().unwrap(), "--predictors", "Max,NQC",
        "-o", out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, 3, "{}", o.stderr);
    assert!(o.stderr.contains("q1") && o.stderr.contains("NQC"), "{}", o.stderr);
    let written = std::fs::read_to_string(&out).unwrap();
    assert!(written.contains("q1\t1\tNA"), "{written}");
    let o = qpp(&[
        "predict", "--run", zero_mean.to_str().unwrap(), "--predictors", "NQC", "--keep-going",
    ]);
    assert_eq!(o.code, 0);
}

#[test]
fn evaluate_perfect_run_and_empty_intersection() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.txt");
    let qrels = dir.path().join("qrels.txt");
    std::fs::write(&run, "q1 Q0 a 1 3 r\nq1 Q0 b 2 2 r\nq1 Q0 c 3 1 r\n").unwrap();
    std::fs::write(&qrels, "q1 0 a 3\nq1 0 b 2\nq1 0 c 0\n").unwrap();
    let o = qpp(&["evaluate", "--run", run.to_str().unwrap(), "--qrels", qrels.to_str().unwrap()]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(body_lines(&o.stdout), ["query\tNDCG@10\tMAP@100\tMRR@10", "q1\t1\t1\t1"]);

    let o = qpp(&[
        "evaluate", "--run", run.to_str().unwrap(), "--qrels", qrels.to_str().unwrap(),
        "--metrics", "NDCG@5,MAP@3",
    ]);
    assert!(o.stdout.contains("# metrics=NDCG@5,MAP@3\n"), "{}", o.stdout);

    let other = dir.path().join("other.txt");
    std::fs::write(&other, "q9 0 a 1\n").unwrap();
    let o = qpp(&["evaluate", "--run", run.to_str().unwrap(), "--qrels", other.to_str().unwrap()]);
    assert_eq!(o.code, 0);
    assert_eq!(body_lines(&o.stdout), ["query\tNDCG@10\tMAP@100\tMRR@10"]);
    assert!(o.stderr.contains("WARN"), "{}", o.stderr);
}

#[test]
fn correlate_identity_and_reverse() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    std::fs::write(&a, "query\tx\nq1\t0.1\nq2\t0.5\nq3\t0.3\nq4\t0.9\n").unwrap();
    std::fs::write(&b, "query\tm\nq1\t0.9\nq2\t0.5\nq3\t0.7\nq4\t0.1\n").unwrap();
    let (a, b) = (a.to_str().unwrap(), b.to_str().unwrap());
    let o = qpp(&["correlate", "--predictions", a, "--effectiveness", a, "--metric", "x", "--predictor", "x"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(body_lines(&o.stdout)[1].starts_with("x\tx\t4\t1\t"), "{}", o.stdout);
    let o = qpp(&["correlate", "--predictions", a, "--effectiveness", b, "--metric", "m", "--predictor", "x"]);
    assert!(body_lines(&o.stdout)[1].starts_with("x\tm\t4\t-1\t"), "{}", o.stdout);
    let o = qpp(&["correlate", "--predictions", a, "--effectiveness", b, "--metric", "nope"]);
    assert_eq!(o.code, 2);
}

#[test]
fn matrix_mode_covers_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.tsv");
    let e = dir.path().join("e.tsv");
    assert_eq!(qpp(&["predict", "--run", &fx("run.txt"), "--predictors", "Max,NQC", "-o", p.to_str().unwrap()]).code, 0);
    assert_eq!(qpp(&["evaluate", "--run", &fx("run.txt"), "--qrels", &fx("qrels.txt"), "-o", e.to_str().unwrap()]).code, 0);
    let o = qpp(&["correlate", "--predictions", p.to_str().unwrap(), "--effectiveness", e.to_str().unwrap()]);
    assert_eq!(o.code, 0);
    assert_eq!(body_lines(&o.stdout).len(), 1 + 2 * 3);
}

#[test]
fn explain_prints_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "run = r.txt\nk = 20\nlambda = 0.3\n").unwrap();
    let o = qpp(&["--explain", "predict", "--config", conf.to_str().unwrap(), "--k", "50"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("k = 50\n"), "{}", o.stdout);
    assert!(o.stdout.contains("lambda = 0.3\n"));
    assert!(o.stdout.contains("tau_upper = 10\n") && o.stdout.contains("rsd_samples = 100\n"));
    assert!(o.stdout.contains(&format!("run = {}", dir.path().join("r.txt").display())));
    let o = qpp(&["--explain", "predict", "--config", conf.to_str().unwrap(), "--set", "k=7"]);
    assert!(o.stdout.contains("k = 7\n"));
    std::fs::write(&conf, "bogus = 1\n").unwrap();
    assert_eq!(qpp(&["predict", "--config", conf.to_str().unwrap()]).code, 1);
}

#[test]
fn outputs_are_byte_identical_unless_stamped() {
    let args = ["predict", "--config", &fx("pipeline.conf"), "--predictors", "RSD(uni),AC,pairRatio"];
    let a = qpp(&args);
    let b = qpp(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    let mut four = vec!["--jobs", "4"];
    four.extend(args);
    assert_eq!(qpp(&four).stdout, a.stdout);
    let mut stamped = vec!["--stamp"];
    stamped.extend(args);
    let s = qpp(&stamped);
    assert!(s.stdout.contains("# created="));
    assert_eq!(body_lines(&s.stdout), body_lines(&a.stdout));
    let other = qpp(&["predict", "--config", &fx("pipeline.conf"), "--predictors", "RSD(uni)", "--seed", "7"]);
    assert!(other.stdout.contains("# seed=7\n"));
}

#[test]
fn simmatrix_is_square_and_symmetric() {
    let o = qpp(&["simmatrix", "--run", &fx("run.txt"), "--dense", &fx("dense.txt"), "--query", "q03", "--k", "12"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let rows: Vec<Vec<f64>> = body_lines(&o.stdout)
        .iter()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 12);
    for i in 0..12 {
        assert_eq!(rows[i].len(), 12);
        for j in 0..12 {
            assert_eq!(rows[i][j], rows[j][i]);
        }
    }
    let o = qpp(&[
        "simmatrix", "--run", &fx("run.txt"), "--dense", &fx("dense.txt"), "--query-vectors",
        &fx("queries.txt"), "--query", "q03", "--k", "5", "--adjusted",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(body_lines(&o.stdout).len(), 5);
    let o = qpp(&["simmatrix", "--run", &fx("run.txt"), "--dense", &fx("dense.txt"), "--query", "q99"]);
    assert_eq!(o.code, 2);
}

#[test]
fn lme_requires_order_and_types() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.tsv");
    std::fs::write(&s, "query\ta\tb\nq1\t0.1\t0.2\nq2\t0.3\t0.1\nq3\t0.0\t0.4\n").unwrap();
    let o = qpp(&["lme", "--sare", s.to_str().unwrap(), "--query-types", &fx("query_types.tsv")]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    let types = dir.path().join("t.tsv");
    std::fs::write(&types, "q1\tFactoid\nq2\tFactoid\n").unwrap();
    let o = qpp(&["lme", "--sare", s.to_str().unwrap(), "--query-types", types.to_str().unwrap(), "--order", "a,b"]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(o.stderr.contains("q3"), "{}", o.stderr);
}
