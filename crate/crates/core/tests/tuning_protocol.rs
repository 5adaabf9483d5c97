use std::collections::BTreeMap;

use qpp_core::predictors::{Predictor, PredictorInputs, PredictorSettings};
use qpp_core::tuning::{enumerate_points, tune, TuningGrid, DEFAULT_CUTOFFS};
use qpp_core::{Column, ScoredRanking, SimilarityKind};

/// Ten queries whose top-10 spread grows with effectiveness while the
/// tail (ranks 11-100) spreads in the opposite direction.
fn engineered() -> (BTreeMap<String, ScoredRanking>, Column) {
    let mut rankings = BTreeMap::new();
    let mut eff = Column::new();
    for i in 0..10 {
        let q = format!("q{i:02}");
        let spread = 1.0 + 0.5 * i as f64;
        let tail = 0.01 + 0.05 * (9 - i) as f64;
        let scores = (0..10)
            .map(|t| 100.0 + 0.1 * i as f64 - spread * t as f64)
            .chain((0..90).map(|t| 50.0 - tail * t as f64));
        let r = ScoredRanking::new(
            q.clone(),
            scores.enumerate().map(|(d, s)| (format!("{q}-d{d}"), s)),
        )
        .unwrap();
        rankings.insert(q.clone(), r);
        eff.insert(q, i as f64 / 10.0);
    }
    (rankings, eff)
}

#[test]
fn picks_the_informative_cutoff() {
    let (rankings, eff) = engineered();
    let inputs = PredictorInputs::scores_only(&rankings);
    let grid = TuningGrid::from_cutoffs(vec![10, 100]);
    let res = tune(Predictor::Nqc, &inputs, &eff, &grid, &PredictorSettings::default(), SimilarityKind::InnerProduct).unwrap();
    let tau_at = |k| res.trace.iter().find(|r| r.point.k == k).unwrap().tau.unwrap();
    assert_eq!(tau_at(10), 1.0);
    assert!(tau_at(100) < 1.0);
    assert_eq!(res.best.k, 10);
    assert_eq!(res.best_tau, 1.0);
}

#[test]
fn trace_covers_exactly_the_feasible_points() {
    let (rankings, eff) = engineered();
    let inputs = PredictorInputs::scores_only(&rankings);
    let grid = TuningGrid::default();
    assert_eq!(grid.cutoffs, DEFAULT_CUTOFFS.to_vec());
    let base = PredictorSettings::default();
    for p in [Predictor::Max, Predictor::Nqc, Predictor::Rsd] {
        let res = tune(p, &inputs, &eff, &grid, &base, SimilarityKind::InnerProduct).unwrap();
        let ks: Vec<usize> = res.trace.iter().map(|r| r.point.k).collect();
        let want: Vec<usize> = DEFAULT_CUTOFFS
            .iter()
            .copied()
            .filter(|&k| k >= p.min_k(&base.rsd) && k <= 100)
            .collect();
        assert_eq!(ks, want, "{p}");
        assert_eq!(res.trace.len() + res.skipped.len(), DEFAULT_CUTOFFS.len());
        for row in &res.trace {
            if let Some(t) = row.tau {
                assert!(res.best_tau >= t);
            }
        }
        let again = tune(p, &inputs, &eff, &grid, &base, SimilarityKind::InnerProduct).unwrap();
        assert_eq!(res, again);
    }
}

#[test]
fn pair_ratio_points_respect_block_constraints() {
    let grid = TuningGrid::default();
    let (points, skipped) = enumerate_points(Predictor::PairRatio, &grid, &PredictorSettings::default(), 100);
    assert!(!points.is_empty());
    for p in &points {
        let pr = p.pair_ratio.unwrap();
        assert!(2 <= pr.tau_upper && pr.tau_upper <= pr.tau_lower && pr.tau_lower < p.k && p.k <= 100);
    }
    assert_eq!(points.len() + skipped.len(), grid.cutoffs.len() * grid.tau_pairs.len());
}
