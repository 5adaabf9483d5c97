//! Grid search of predictor hyperparameters, maximising Kendall's tau against
//! an effectiveness column on a tuning query set.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::kendall_columns;
use crate::predictors::{
    compute_column, PairRatioParams, Predictor, PredictorInputs, PredictorSettings,
};
use crate::similarity::SimilarityKind;
use crate::types::Column;

/// Cutoff grid used for every predictor.
pub const DEFAULT_CUTOFFS: [usize; 8] = [5, 10, 20, 50, 100, 200, 500, 1000];

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub cutoffs: Vec<usize>,
    pub tau_pairs: Vec<PairRatioParams>,
    pub lambdas: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self::from_cutoffs(DEFAULT_CUTOFFS.to_vec())
    }
}

impl TuningGrid {
    /// Grid with the default tau pairs (every `a <= b` drawn from the cutoffs)
    /// and lambdas `0.0, 0.1, ..., 1.0`.
    pub fn from_cutoffs(cutoffs: Vec<usize>) -> Self {
        let tau_pairs = cutoffs
            .iter()
            .flat_map(|&a| {
                cutoffs
                    .iter()
                    .filter(move |&&b| a <= b)
                    .map(move |&b| PairRatioParams { tau_upper: a, tau_lower: b })
            })
            .collect();
        let lambdas = (0..=10).map(|i| i as f64 / 10.0).collect();
        Self {
            cutoffs,
            tau_pairs,
            lambdas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() {
            return Err(Error::InvalidParams("empty cutoff grid".into()));
        }
        if self.cutoffs[0] == 0 || self.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(
                "cutoffs must be positive and strictly ascending".into(),
            ));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::InvalidParams(format!("lambda {l} outside [0,1]")));
        }
        Ok(())
    }
}

/// One hyperparameter combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub k: usize,
    pub pair_ratio: Option<PairRatioParams>,
    pub lambda: Option<f64>,
}

impl GridPoint {
    /// Tie-break order: smaller k, then smaller tau_upper, then smaller lambda.
    fn tie_key(&self) -> (usize, usize, u64, usize) {
        let (tu, tl) = self
            .pair_ratio
            .map_or((0, 0), |p| (p.tau_upper, p.tau_lower));
        (self.k, tu, self.lambda.unwrap_or(0.0).to_bits(), tl)
    }

    pub fn apply(&self, base: &PredictorSettings) -> PredictorSettings {
        let mut s = *base;
        s.k = self.k;
        if let Some(p) = self.pair_ratio {
            s.pair_ratio = p;
        }
        if let Some(l) = self.lambda {
            s.lambda = l;
        }
        s.rsd.seed = grid_seed(base.rsd.seed, self);
        s
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-point seed derived from the base seed and the point's
/// parameters.
pub fn grid_seed(base: u64, point: &GridPoint) -> u64 {
    let (tu, tl) = point
        .pair_ratio
        .map_or((0, 0), |p| (p.tau_upper as u64, p.tau_lower as u64));
    let lambda = point.lambda.map_or(u64::MAX, f64::to_bits);
    [point.k as u64, tu, tl, lambda]
        .iter()
        .fold(splitmix64(base), |h, &v| splitmix64(h ^ v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub point: GridPoint,
    /// `None` when tau is undefined at this point (e.g. a constant column).
    pub tau: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub predictor: Predictor,
    pub best: GridPoint,
    pub best_tau: f64,
    /// One row per feasible grid point, in grid order.
    pub trace: Vec<TraceRow>,
    /// Grid points skipped as infeasible, with the reason.
    pub skipped: Vec<(GridPoint, String)>,
}

/// Splits the grid into feasible points (in grid order) and skipped ones.
///
/// A cutoff is feasible when it is at least the predictor's minimum and no
/// larger than the shortest tuning ranking, so every query sees exactly `k`
/// documents.
pub fn enumerate_points(
    predictor: Predictor,
    grid: &TuningGrid,
    base: &PredictorSettings,
    shortest_ranking: usize,
) -> (Vec<GridPoint>, Vec<(GridPoint, String)>) {
    let mut feasible = Vec::new();
    let mut skipped = Vec::new();
    let min_k = predictor.min_k(&base.rsd);
    let pairs: Vec<Option<PairRatioParams>> = if predictor.uses_pair_ratio() {
        grid.tau_pairs.iter().copied().map(Some).collect()
    } else {
        alloc::vec![None]
    };
    let lambdas: Vec<Option<f64>> = if predictor.is_interpolated() {
        grid.lambdas.iter().copied().map(Some).collect()
    } else {
        alloc::vec![None]
    };
    for &k in &grid.cutoffs {
        for pr in &pairs {
            for l in &lambdas {
                let point = GridPoint { k, pair_ratio: *pr, lambda: *l };
                if k < min_k {
                    skipped.push((point, format!("k = {k} below minimum {min_k}")));
                } else if k > shortest_ranking {
                    skipped.push((
                        point,
                        format!("k = {k} exceeds shortest ranking ({shortest_ranking})"),
                    ));
                } else if let Some(Err(e)) = pr.map(|p| p.validate(k)) {
                    skipped.push((point, format!("{e}")));
                } else {
                    feasible.push(point);
                }
            }
        }
    }
    (feasible, skipped)
}

/// Kendall's tau of the predictor at one grid point.
pub fn evaluate_point(
    predictor: Predictor,
    point: &GridPoint,
    inputs: &PredictorInputs<'_>,
    effectiveness: &Column,
    base: &PredictorSettings,
    similarity: SimilarityKind,
) -> TraceRow {
    let settings = point.apply(base);
    let outcome = compute_column(inputs, predictor, settings, similarity)
        .and_then(|(col, _)| kendall_columns(&col, effectiveness));
    match outcome {
        Ok(r) => TraceRow { point: *point, tau: Some(r.tau), note: None },
        Err(e) => TraceRow {
            point: *point,
            tau: None,
            note: Some(format!("{e}")),
        },
    }
}

/// Best row of a trace by tau, ties going to the smaller tie key.
pub fn select_best(trace: &[TraceRow]) -> Option<(GridPoint, f64)> {
    trace
        .iter()
        .filter_map(|r| r.tau.map(|t| (r.point, t)))
        .fold(None, |best: Option<(GridPoint, f64)>, (p, t)| match best {
            None => Some((p, t)),
            Some((bp, bt)) => {
                if t > bt || (t == bt && p.tie_key() < bp.tie_key()) {
                    Some((p, t))
                } else {
                    Some((bp, bt))
                }
            }
        })
}

/// Shortest ranking among the queries that have an effectiveness value.
pub fn shortest_tuning_ranking(inputs: &PredictorInputs<'_>, effectiveness: &Column) -> Result<usize> {
    let lens: Vec<usize> = inputs
        .rankings
        .iter()
        .filter(|(q, _)| effectiveness.contains_key(*q))
        .map(|(_, r)| r.len())
        .collect();
    if lens.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "tuning needs at least 2 queries with effectiveness values, got {}",
            lens.len()
        )));
    }
    Ok(lens.into_iter().min().unwrap_or(0))
}

/// Full grid search for one predictor.
pub fn tune(
    predictor: Predictor,
    inputs: &PredictorInputs<'_>,
    effectiveness: &Column,
    grid: &TuningGrid,
    base: &PredictorSettings,
    similarity: SimilarityKind,
) -> Result<TuningResult> {
    grid.validate()?;
    inputs.check(&[predictor])?;
    let shortest = shortest_tuning_ranking(inputs, effectiveness)?;
    let (points, skipped) = enumerate_points(predictor, grid, base, shortest);
    let trace: Vec<TraceRow> = points
        .iter()
        .map(|p| evaluate_point(predictor, p, inputs, effectiveness, base, similarity))
        .collect();
    finish(predictor, trace, skipped)
}

/// Builds the result from an evaluated trace.
pub fn finish(
    predictor: Predictor,
    trace: Vec<TraceRow>,
    skipped: Vec<(GridPoint, String)>,
) -> Result<TuningResult> {
    let (best, best_tau) = select_best(&trace).ok_or_else(|| {
        Error::EmptyGrid(format!(
            "{predictor}: {} feasible points, none with a defined tau",
            trace.len()
        ))
    })?;
    Ok(TuningResult {
        predictor,
        best,
        best_tau,
        trace,
        skipped,
    })
}
