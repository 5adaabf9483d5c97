//! Linear mixed-effects models for per-query prediction errors.
//!
//! Each query contributes one observation per predictor. The predictor's
//! position in a caller-supplied order is the within-query covariate, the
//! query type is a between-query factor, and queries carry a random
//! intercept (and slope). Models are fitted by full maximum likelihood with
//! the fixed effects and the residual variance profiled out, so the
//! optimiser only sees the relative Cholesky factor of the random-effects
//! covariance.

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
use crate::linalg::{chol_inverse, chol_logdet, chol_solve, cholesky, matmul, transpose};
use crate::optim::{nelder_mead, Minimum, NelderMeadOptions};
use crate::stats::{chi2_critical, chi2_sf, normal_two_sided_p};
use crate::types::{QueryTypeMap, SareTable};

/// Lower bound on the residual variance.
pub const SIGMA2_FLOOR: f64 = 1e-10;
/// Significance level for both the likelihood-ratio and Wald tests.
pub const ALPHA: f64 = 0.05;
pub const WALD_CRITICAL: f64 = 1.96;
/// Largest accepted |d loglik / d theta| relative to |loglik| at an optimum.
pub const GRADIENT_TOL: f64 = 1e-5;
/// Components whose denominator falls below this are left undefined.
pub const PSEUDO_R2_EPS: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// ---------------------------------------------------------------------------
// design

#[derive(Debug, Clone, PartialEq)]
pub struct LmeRow {
    pub query_id: String,
    pub predictor_index: usize,
    pub query_type: String,
    pub sare: f64,
}

/// Long-format data: one row per (query, predictor).
#[derive(Debug, Clone, PartialEq)]
pub struct LmeDesign {
    rows: Vec<LmeRow>,
    predictor_order: Vec<String>,
    reference_type: String,
    types: Vec<String>,
    type_counts: BTreeMap<String, usize>,
    slope_origin: f64,
}

impl LmeDesign {
    /// Validates rows: every query has exactly one row per predictor, a
    /// single type, and finite values.
    pub fn from_rows(rows: Vec<LmeRow>, predictor_order: Vec<String>) -> Result<Self> {
        let j = predictor_order.len();
        if j == 0 {
            return Err(Error::InvalidParams("predictor order is empty".into()));
        }
        for (i, name) in predictor_order.iter().enumerate() {
            if predictor_order[..i].contains(name) {
                return Err(Error::InvalidParams(format!(
                    "predictor `{name}` listed twice in the order"
                )));
            }
        }
        if rows.is_empty() {
            return Err(Error::MissingInput("design has no rows".into()));
        }
        let mut seen: BTreeMap<&str, (&str, Vec<bool>)> = BTreeMap::new();
        for r in &rows {
            if r.predictor_index >= j {
                return Err(Error::InvalidParams(format!(
                    "predictor index {} out of range for {j} predictors",
                    r.predictor_index
                )));
            }
            if !r.sare.is_finite() {
                return Err(Error::NonFinite(format!(
                    "query `{}` predictor {}",
                    r.query_id, r.predictor_index
                )));
            }
            let entry = seen
                .entry(r.query_id.as_str())
                .or_insert_with(|| (r.query_type.as_str(), vec![false; j]));
            if entry.0 != r.query_type {
                return Err(Error::InvalidParams(format!(
                    "query `{}` has more than one query type",
                    r.query_id
                )));
            }
            if entry.1[r.predictor_index] {
                return Err(Error::InvalidParams(format!(
                    "query `{}` has two rows for predictor {}",
                    r.query_id, r.predictor_index
                )));
            }
            entry.1[r.predictor_index] = true;
        }
        let mut type_counts: BTreeMap<String, usize> = BTreeMap::new();
        for (q, (t, present)) in &seen {
            if let Some(missing) = present.iter().position(|p| !p) {
                return Err(Error::MissingInput(format!(
                    "query `{q}` has no value for predictor `{}`",
                    predictor_order[missing]
                )));
            }
            *type_counts.entry(t.to_string()).or_insert(0) += 1;
        }
        // most frequent; BTreeMap order breaks ties alphabetically
        let mut reference_type = String::new();
        let mut best = 0;
        for (t, &c) in &type_counts {
            if c > best {
                best = c;
                reference_type = t.clone();
            }
        }
        let types = type_counts.keys().cloned().collect();
        Ok(Self {
            rows,
            predictor_order,
            reference_type,
            types,
            type_counts,
            slope_origin: 0.0,
        })
    }

    pub fn rows(&self) -> &[LmeRow] {
        &self.rows
    }

    pub fn predictor_order(&self) -> &[String] {
        &self.predictor_order
    }

    pub fn reference_type(&self) -> &str {
        &self.reference_type
    }

    /// All type labels, sorted.
    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn type_count(&self, label: &str) -> usize {
        self.type_counts.get(label).copied().unwrap_or(0)
    }

    pub fn num_queries(&self) -> usize {
        self.type_counts.values().sum()
    }

    pub fn slope_origin(&self) -> f64 {
        self.slope_origin
    }

    /// Same data with the covariate measured as `index - origin`.
    pub fn with_slope_origin(mut self, origin: f64) -> Self {
        self.slope_origin = origin;
        self
    }
}

/// Reshapes a per-query sARE table into long format.
pub fn build_design(
    sare: &SareTable,
    types: &QueryTypeMap,
    predictor_order: &[String],
) -> Result<LmeDesign> {
    let cols = predictor_order
        .iter()
        .map(|name| {
            sare.column_index(name).ok_or_else(|| {
                Error::MissingInput(format!("predictor `{name}` not present in the sARE table"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let untyped: Vec<String> = sare
        .rows()
        .keys()
        .filter(|q| types.get(q).is_none())
        .cloned()
        .collect();
    if !untyped.is_empty() {
        return Err(Error::MissingType(untyped));
    }
    let mut rows = Vec::with_capacity(sare.num_rows() * cols.len());
    for (q, values) in sare.rows() {
        let label = types.get(q).unwrap_or_default();
        for (j, &c) in cols.iter().enumerate() {
            let v = values[c].ok_or_else(|| {
                Error::MissingInput(format!(
                    "no sARE value for query `{q}` and predictor `{}`",
                    predictor_order[j]
                ))
            })?;
            rows.push(LmeRow {
                query_id: q.clone(),
                predictor_index: j,
                query_type: label.to_string(),
                sare: v,
            });
        }
    }
    LmeDesign::from_rows(rows, predictor_order.to_vec())
}

// ---------------------------------------------------------------------------
// model specification

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LmeModel {
    /// Intercept only, random intercept.
    Average,
    /// Intercept and predictor-index slope, random intercept and slope.
    Qpp,
    /// `Qpp` plus query-type main effects.
    FullMain,
    /// `FullMain` plus type-by-index interactions.
    Full,
}

impl LmeModel {
    pub const ALL: [LmeModel; 4] = [
        LmeModel::Average,
        LmeModel::Qpp,
        LmeModel::FullMain,
        LmeModel::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LmeModel::Average => "average",
            LmeModel::Qpp => "qpp",
            LmeModel::FullMain => "full-main",
            LmeModel::Full => "full",
        }
    }

    pub fn has_slope(self) -> bool {
        self != LmeModel::Average
    }

    pub fn has_type_main(self) -> bool {
        matches!(self, LmeModel::FullMain | LmeModel::Full)
    }

    pub fn has_type_slope(self) -> bool {
        self == LmeModel::Full
    }

    /// Number of random effects per query.
    pub fn random_effects(self) -> usize {
        if self.has_slope() {
            2
        } else {
            1
        }
    }

    /// Free parameters of the relative covariance factor.
    pub fn theta_len(self) -> usize {
        let q = self.random_effects();
        q * (q + 1) / 2
    }
}

impl fmt::Display for LmeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LmeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LmeModel::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParams(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FixedTerm {
    Intercept,
    Slope,
    TypeMain(String),
    TypeSlope(String),
}

impl fmt::Display for FixedTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixedTerm::Intercept => f.write_str("intercept"),
            FixedTerm::Slope => f.write_str("index"),
            FixedTerm::TypeMain(t) => write!(f, "type[{t}]"),
            FixedTerm::TypeSlope(t) => write!(f, "type[{t}]:index"),
        }
    }
}

// ---------------------------------------------------------------------------
// profiled likelihood

/// Per-group cross products, shared by all queries with identical X and Z.
#[derive(Debug, Clone)]
struct Pattern {
    count: f64,
    xtx: Vec<f64>,
    xtz: Vec<f64>,
    ztz: Vec<f64>,
    // sums over the groups in the pattern
    xty: Vec<f64>,
    zty: Vec<f64>,
    zyzy: Vec<f64>,
    yty: f64,
}

/// Profiled likelihood evaluated at one value of the covariance factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfiledPoint {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    /// `(X' H^-1 X)^-1`; multiply by `sigma2_eps` for the covariance of beta.
    pub beta_cov_unscaled: Vec<f64>,
    pub sigma2_eps: f64,
    /// Random-effects covariance in data units, row-major `q x q`.
    pub psi: Vec<f64>,
    pub rss: f64,
    pub loglik: f64,
    pub floored: bool,
}

/// The likelihood of one model on one design, ready for evaluation.
#[derive(Debug, Clone)]
pub struct LmeProblem {
    model: LmeModel,
    terms: Vec<FixedTerm>,
    p: usize,
    q: usize,
    n_obs: usize,
    n_groups: usize,
    patterns: Vec<Pattern>,
    moment_theta: Vec<f64>,
    y_shift: f64,
}

fn lower_factor(theta: &[f64], q: usize) -> Vec<f64> {
    match q {
        1 => vec![theta[0]],
        _ => vec![theta[0], 0.0, theta[1], theta[2]],
    }
}

fn add_into(acc: &mut [f64], v: &[f64], w: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += w * b;
    }
}

impl LmeProblem {
    pub fn new(design: &LmeDesign, model: LmeModel) -> Result<Self> {
        let n_groups = design.num_queries();
        if n_groups < 2 {
            return Err(Error::InvalidParams(
                "mixed model needs at least two queries".into(),
            ));
        }
        let j = design.predictor_order().len();
        if model.has_slope() && j < 2 {
            return Err(Error::InvalidParams(
                "slope models need at least two predictors".into(),
            ));
        }
        let others: Vec<&String> = design
            .types()
            .iter()
            .filter(|t| *t != design.reference_type())
            .collect();
        if model.has_type_main() {
            if others.is_empty() {
                return Err(Error::InvalidParams(
                    "full model needs at least two query types".into(),
                ));
            }
            for t in &others {
                if design.type_count(t) < 2 {
                    return Err(Error::SingularType((*t).clone()));
                }
            }
        }

        let mut terms = vec![FixedTerm::Intercept];
        if model.has_slope() {
            terms.push(FixedTerm::Slope);
        }
        if model.has_type_main() {
            terms.extend(others.iter().map(|t| FixedTerm::TypeMain((*t).clone())));
        }
        if model.has_type_slope() {
            terms.extend(others.iter().map(|t| FixedTerm::TypeSlope((*t).clone())));
        }
        let p = terms.len();
        let q = model.random_effects();

        // every model has an intercept, so centring the response only
        // shifts that coefficient; it keeps y'y small and the profiled
        // residual sum of squares free of cancellation
        let y_shift = design.rows().iter().map(|r| r.sare).sum::<f64>() / design.rows().len() as f64;

        let mut groups: BTreeMap<&str, Vec<&LmeRow>> = BTreeMap::new();
        for r in design.rows() {
            groups.entry(r.query_id.as_str()).or_default().push(r);
        }

        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut patterns: Vec<Pattern> = Vec::new();
        let mut moments = MomentAccumulator::new(q);
        let mut n_obs = 0;
        for rows in groups.values_mut() {
            rows.sort_by_key(|r| r.predictor_index);
            let ji = rows.len();
            n_obs += ji;
            let mut x = vec![0.0; ji * p];
            let mut z = vec![0.0; ji * q];
            let mut y = vec![0.0; ji];
            for (row, r) in rows.iter().enumerate() {
                let cov = r.predictor_index as f64 - design.slope_origin();
                for (c, term) in terms.iter().enumerate() {
                    x[row * p + c] = match term {
                        FixedTerm::Intercept => 1.0,
                        FixedTerm::Slope => cov,
                        FixedTerm::TypeMain(t) => f64::from(u8::from(r.query_type == *t)),
                        FixedTerm::TypeSlope(t) => {
                            if r.query_type == *t {
                                cov
                            } else {
                                0.0
                            }
                        }
                    };
                }
                z[row * q] = 1.0;
                if q == 2 {
                    z[row * q + 1] = cov;
                }
                y[row] = r.sare - y_shift;
            }
            let xt = transpose(&x, ji, p);
            let zt = transpose(&z, ji, q);
            let zty = matmul(&zt, &y, q, ji, 1);
            let key: Vec<u64> = x.iter().chain(&z).map(|v| v.to_bits()).collect();
            let slot = *index.entry(key).or_insert_with(|| {
                patterns.push(Pattern {
                    count: 0.0,
                    xtx: matmul(&xt, &x, p, ji, p),
                    xtz: matmul(&xt, &z, p, ji, q),
                    ztz: matmul(&zt, &z, q, ji, q),
                    xty: vec![0.0; p],
                    zty: vec![0.0; q],
                    zyzy: vec![0.0; q * q],
                    yty: 0.0,
                });
                patterns.len() - 1
            });
            let pat = &mut patterns[slot];
            pat.count += 1.0;
            add_into(&mut pat.xty, &matmul(&xt, &y, p, ji, 1), 1.0);
            add_into(&mut pat.zty, &zty, 1.0);
            add_into(&mut pat.zyzy, &matmul(&zty, &zty, q, 1, q), 1.0);
            pat.yty += y.iter().map(|v| v * v).sum::<f64>();
            moments.add(&pat.ztz, &zty, &y);
        }

        let mut problem = Self {
            model,
            terms,
            p,
            q,
            n_obs,
            n_groups,
            patterns,
            moment_theta: Vec::new(),
            y_shift,
        };
        problem.moment_theta = moments.start_theta(n_obs);
        // rank check on the fixed effects (independent of theta)
        problem.evaluate_at(&vec![0.0; model.theta_len()])?;
        Ok(problem)
    }

    pub fn model(&self) -> LmeModel {
        self.model
    }

    pub fn terms(&self) -> &[FixedTerm] {
        &self.terms
    }

    pub fn num_obs(&self) -> usize {
        self.n_obs
    }

    pub fn num_groups(&self) -> usize {
        self.n_groups
    }

    /// Profiled log-likelihood and the GLS fixed effects at `theta`, the
    /// lower-triangular relative factor in row order (`[l00]` or
    /// `[l00, l10, l11]`).
    pub fn evaluate_at(&self, theta: &[f64]) -> Result<ProfiledPoint> {
        let (p, q) = (self.p, self.q);
        if theta.len() != self.model.theta_len() {
            return Err(Error::InvalidParams(format!(
                "expected {} covariance parameters, got {}",
                self.model.theta_len(),
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("covariance parameter".into()));
        }
        let l = lower_factor(theta, q);
        let lt = transpose(&l, q, q);
        let mut xthx = vec![0.0; p * p];
        let mut xthy = vec![0.0; p];
        let mut yhy = 0.0;
        let mut logdet = 0.0;
        for pat in &self.patterns {
            let mut m = matmul(&lt, &matmul(&pat.ztz, &l, q, q, q), q, q, q);
            for i in 0..q {
                m[i * q + i] += 1.0;
            }
            let mc = cholesky(&m, q)
                .ok_or_else(|| Error::Degenerate("random-effects system not positive definite".into()))?;
            let minv = chol_inverse(&mc, q);
            logdet += pat.count * chol_logdet(&mc, q);

            let a = matmul(&pat.xtz, &l, p, q, q);
            let a_minv = matmul(&a, &minv, p, q, q);
            let corr = matmul(&a_minv, &transpose(&a, p, q), p, q, p);
            for i in 0..p * p {
                xthx[i] += pat.count * (pat.xtx[i] - corr[i]);
            }
            let shift = matmul(&a_minv, &matmul(&lt, &pat.zty, q, q, 1), p, q, 1);
            for i in 0..p {
                xthy[i] += pat.xty[i] - shift[i];
            }
            let inner = matmul(&lt, &matmul(&pat.zyzy, &l, q, q, q), q, q, q);
            let mut tr = 0.0;
            for i in 0..q {
                for k in 0..q {
                    tr += minv[i * q + k] * inner[k * q + i];
                }
            }
            yhy += pat.yty - tr;
        }
        let xc = cholesky(&xthx, p).ok_or_else(|| {
            Error::SingularDesign(format!(
                "fixed effects of the {} model are not identifiable",
                self.model
            ))
        })?;
        let mut beta = chol_solve(&xc, p, &xthy);
        let fitted: f64 = beta.iter().zip(&xthy).map(|(b, v)| b * v).sum();
        beta[0] += self.y_shift;
        let rss = (yhy - fitted).max(0.0);
        let n = self.n_obs as f64;
        let mut sigma2 = rss / n;
        let floored = !(sigma2 >= SIGMA2_FLOOR);
        if floored {
            sigma2 = SIGMA2_FLOOR;
        }
        let loglik = -0.5 * (n * (LN_2PI + libm::log(sigma2)) + logdet + rss / sigma2);
        let llt = matmul(&l, &lt, q, q, q);
        Ok(ProfiledPoint {
            theta: theta.to_vec(),
            beta,
            beta_cov_unscaled: chol_inverse(&xc, p),
            sigma2_eps: sigma2,
            psi: llt.iter().map(|v| v * sigma2).collect(),
            rss,
            loglik,
            floored,
        })
    }

    /// Deterministic starting points: moment-based, inflated, deflated,
    /// diagonal and near-zero.
    pub fn starts(&self) -> Vec<Vec<f64>> {
        let m = &self.moment_theta;
        let scaled = |f: f64| m.iter().map(|v| v * f).collect::<Vec<_>>();
        let diagonal = if self.q == 2 {
            let d0 = libm::hypot(m[0], 0.0);
            let d1 = libm::hypot(m[1], m[2]);
            vec![d0, 0.0, d1]
        } else {
            m.clone()
        };
        vec![
            m.clone(),
            scaled(2.0),
            scaled(0.5),
            diagonal,
            vec![1e-3; m.len()],
        ]
    }

    /// Central-difference gradient of the profiled log-likelihood.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(theta.len());
        for i in 0..theta.len() {
            let h = 1e-5 * libm::fabs(theta[i]).max(1.0);
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += h;
            down[i] -= h;
            let fu = self.evaluate_at(&up)?.loglik;
            let fd = self.evaluate_at(&down)?.loglik;
            g.push((fu - fd) / (2.0 * h));
        }
        Ok(g)
    }
}

/// Per-query OLS of the response on Z, used for the moment-based start.
struct MomentAccumulator {
    q: usize,
    coefs: Vec<Vec<f64>>,
    inv_sum: Vec<f64>,
    rss: f64,
    dof: f64,
}

impl MomentAccumulator {
    fn new(q: usize) -> Self {
        Self {
            q,
            coefs: Vec::new(),
            inv_sum: vec![0.0; q * q],
            rss: 0.0,
            dof: 0.0,
        }
    }

    fn add(&mut self, ztz: &[f64], zty: &[f64], y: &[f64]) {
        let q = self.q;
        let Some(c) = cholesky(ztz, q) else { return };
        let b = chol_solve(&c, q, zty);
        let fitted: f64 = b.iter().zip(zty).map(|(a, v)| a * v).sum();
        let yty: f64 = y.iter().map(|v| v * v).sum();
        self.rss += (yty - fitted).max(0.0);
        self.dof += (y.len() - q) as f64;
        add_into(&mut self.inv_sum, &chol_inverse(&c, q), 1.0);
        self.coefs.push(b);
    }

    fn start_theta(&self, n_obs: usize) -> Vec<f64> {
        let q = self.q;
        let n = self.coefs.len();
        let fallback = if q == 1 { vec![1.0] } else { vec![1.0, 0.0, 1.0] };
        if n < 2 {
            return fallback;
        }
        let s2 = if self.dof > 0.0 {
            self.rss / self.dof
        } else {
            self.rss / n_obs as f64
        };
        if !(s2 > 1e-300) {
            return fallback;
        }
        let mut mean = vec![0.0; q];
        for b in &self.coefs {
            add_into(&mut mean, b, 1.0 / n as f64);
        }
        let mut rel = vec![0.0; q * q];
        for b in &self.coefs {
            for i in 0..q {
                for k in 0..q {
                    rel[i * q + k] += (b[i] - mean[i]) * (b[k] - mean[k]) / (n - 1) as f64;
                }
            }
        }
        for i in 0..q * q {
            rel[i] = (rel[i] - s2 * self.inv_sum[i] / n as f64) / s2;
        }
        let d0 = rel[0].max(1e-2);
        if q == 1 {
            return vec![libm::sqrt(d0)];
        }
        let d1 = rel[3].max(1e-2);
        let bound = 0.9 * libm::sqrt(d0 * d1);
        let c = rel[1].clamp(-bound, bound);
        let l00 = libm::sqrt(d0);
        let l10 = c / l00;
        vec![l00, l10, libm::sqrt(d1 - l10 * l10)]
    }
}

// ---------------------------------------------------------------------------
// fitting

#[derive(Debug, Clone, PartialEq)]
pub struct FixedEffect {
    pub term: FixedTerm,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub theta: Vec<f64>,
    /// Best log-likelihood reached from each start, in start order.
    pub start_logliks: Vec<f64>,
    pub evaluations: usize,
    pub optimizer_converged: bool,
    /// max |d loglik / d theta| at the returned optimum.
    pub gradient_max: f64,
    pub gradient_ok: bool,
    pub sigma2_floored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmeFit {
    pub model: LmeModel,
    pub fixed: Vec<FixedEffect>,
    pub sigma2_0: f64,
    pub sigma_01: Option<f64>,
    pub sigma2_1: Option<f64>,
    pub sigma2_eps: f64,
    pub loglik: f64,
    pub deviance: f64,
    pub converged: bool,
    pub n_obs: usize,
    pub n_queries: usize,
    pub diagnostics: FitDiagnostics,
}

impl LmeFit {
    pub fn effect(&self, term: &FixedTerm) -> Option<&FixedEffect> {
        self.fixed.iter().find(|e| e.term == *term)
    }

    pub fn estimate(&self, term: &FixedTerm) -> Option<f64> {
        self.effect(term).map(|e| e.estimate)
    }

    /// Fixed effects plus covariance parameters plus the residual variance.
    pub fn num_params(&self) -> usize {
        self.fixed.len() + self.model.theta_len() + 1
    }

    pub fn has_type_slope(&self) -> bool {
        self.fixed
            .iter()
            .any(|e| matches!(e.term, FixedTerm::TypeSlope(_)))
    }
}

pub fn fit(design: &LmeDesign, model: LmeModel) -> Result<LmeFit> {
    fit_with_start(design, model, None)
}

/// Like [`fit`], with an extra starting point (for instance the optimum of
/// a nested model) tried after the default ones.
pub fn fit_with_start(design: &LmeDesign, model: LmeModel, extra: Option<&[f64]>) -> Result<LmeFit> {
    let problem = LmeProblem::new(design, model)?;
    let mut starts = problem.starts();
    if let Some(e) = extra {
        starts.push(embed_theta(e, model.theta_len())?);
    }
    let opts = NelderMeadOptions::default();
    let objective = |t: &[f64]| match problem.evaluate_at(t) {
        Ok(pt) => -pt.loglik,
        Err(_) => f64::INFINITY,
    };

    let mut start_logliks = Vec::with_capacity(starts.len());
    let mut evaluations = 0;
    let mut best: Option<Minimum> = None;
    for s in &starts {
        let m = nelder_mead(objective, s, &opts);
        evaluations += m.evals;
        start_logliks.push(-m.value);
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    let mut best = best.ok_or_else(|| Error::InvalidParams("no starting points".into()))?;
    // restart from the best point until it stops moving
    for _ in 0..4 {
        let m = nelder_mead(objective, &best.x, &opts);
        evaluations += m.evals;
        let gain = best.value - m.value;
        if m.value <= best.value {
            best = m;
        }
        if gain <= 1e-12 * (1.0 + libm::fabs(best.value)) {
            break;
        }
    }
    let (x, value, newton_steps) = newton_polish(&objective, best.x.clone(), best.value);
    best.x = x;
    best.value = value;
    evaluations += newton_steps;
    if !best.value.is_finite() {
        return Err(Error::Degenerate(format!(
            "{} model likelihood is not finite at any start",
            model
        )));
    }

    let point = problem.evaluate_at(&best.x)?;
    let gradient = problem.gradient(&best.x)?;
    let gradient_max = gradient.iter().fold(0.0f64, |m, g| m.max(libm::fabs(*g)));
    let gradient_ok = gradient_max <= GRADIENT_TOL * libm::fabs(point.loglik);

    let p = problem.terms.len();
    let fixed = problem
        .terms
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let var = point.sigma2_eps * point.beta_cov_unscaled[i * p + i];
            let se = libm::sqrt(var.max(0.0));
            let estimate = point.beta[i];
            let z = if se > 0.0 { estimate / se } else { 0.0 };
            FixedEffect {
                term: term.clone(),
                estimate,
                se,
                z,
                p_value: normal_two_sided_p(z),
            }
        })
        .collect();
    let (sigma_01, sigma2_1) = if problem.q == 2 {
        (Some(point.psi[1]), Some(point.psi[3]))
    } else {
        (None, None)
    };
    Ok(LmeFit {
        model,
        fixed,
        sigma2_0: point.psi[0],
        sigma_01,
        sigma2_1,
        sigma2_eps: point.sigma2_eps,
        loglik: point.loglik,
        deviance: -2.0 * point.loglik,
        converged: best.converged && !point.floored && gradient_ok,
        n_obs: problem.n_obs,
        n_queries: problem.n_groups,
        diagnostics: FitDiagnostics {
            theta: best.x,
            start_logliks,
            evaluations,
            optimizer_converged: best.converged,
            gradient_max,
            gradient_ok,
            sigma2_floored: point.floored,
        },
    })
}

/// Newton refinement with finite-difference derivatives. The simplex
/// leaves the parameters accurate only to about the square root of its
/// function tolerance; a few Newton steps bring them to near machine
/// precision. Steps that do not decrease the objective are refused.
fn newton_polish<F>(f: &F, mut x: Vec<f64>, mut fx: f64) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let mut evals = 0;
    if !fx.is_finite() {
        return (x, fx, evals);
    }
    for _ in 0..20 {
        let hg: Vec<f64> = x.iter().map(|v| 1e-5 * libm::fabs(*v).max(1.0)).collect();
        let hh: Vec<f64> = x.iter().map(|v| 1e-4 * libm::fabs(*v).max(1.0)).collect();
        let at = |d: &[(usize, f64)]| {
            let mut y = x.clone();
            for &(i, v) in d {
                y[i] += v;
            }
            f(&y)
        };
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            g[i] = (at(&[(i, hg[i])]) - at(&[(i, -hg[i])])) / (2.0 * hg[i]);
            h[i * n + i] = (at(&[(i, hh[i])]) - 2.0 * fx + at(&[(i, -hh[i])])) / (hh[i] * hh[i]);
            for j in 0..i {
                let v = (at(&[(i, hh[i]), (j, hh[j])]) - at(&[(i, hh[i]), (j, -hh[j])])
                    - at(&[(i, -hh[i]), (j, hh[j])])
                    + at(&[(i, -hh[i]), (j, -hh[j])]))
                    / (4.0 * hh[i] * hh[j]);
                h[i * n + j] = v;
                h[j * n + i] = v;
            }
        }
        evals += 2 * n + 2 * n + 2 * n * (n - 1);
        if g.iter().chain(&h).any(|v| !v.is_finite()) {
            break;
        }
        let Some(c) = cholesky(&h, n) else { break };
        let step = chol_solve(&c, n, &g);
        let predicted: f64 = 0.5 * g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
        // below this the objective's rounding noise hides real progress
        let noise = 1e-12 * (1.0 + libm::fabs(fx));
        let mut t = 1.0;
        let mut moved = None;
        while t > 1e-6 {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let fc = f(&cand);
            evals += 1;
            if fc <= fx || (predicted < noise && fc <= fx + noise) {
                moved = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = moved else { break };
        let size = cand
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max(libm::fabs(a - b) / libm::fabs(*b).max(1.0)));
        x = cand;
        fx = fc;
        if size < 1e-12 {
            break;
        }
    }
    (x, fx, evals)
}

/// Maps a covariance factor into a model with at least as many random
/// effects, leaving the added ones at zero.
fn embed_theta(theta: &[f64], len: usize) -> Result<Vec<f64>> {
    match (theta.len(), len) {
        (a, b) if a == b => Ok(theta.to_vec()),
        (1, 3) => Ok(vec![theta[0], 0.0, 0.0]),
        (a, b) => Err(Error::InvalidParams(format!(
            "cannot use a {a}-parameter start for a {b}-parameter model"
        ))),
    }
}

// ---------------------------------------------------------------------------
// variance decomposition

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDecomposition {
    /// Share of within-query residual variance explained by the index slope.
    pub pseudo_r2_eps: Option<f64>,
    /// Share of random-intercept variance explained by query type.
    pub pseudo_r2_0: Option<f64>,
    /// Share of random-slope variance explained by query type.
    pub pseudo_r2_1: Option<f64>,
}

impl VarianceDecomposition {
    /// Names of components that came out negative.
    pub fn negative(&self) -> Vec<&'static str> {
        [
            ("pseudo_r2_eps", self.pseudo_r2_eps),
            ("pseudo_r2_0", self.pseudo_r2_0),
            ("pseudo_r2_1", self.pseudo_r2_1),
        ]
        .into_iter()
        .filter(|(_, v)| v.is_some_and(|v| v < 0.0))
        .map(|(n, _)| n)
        .collect()
    }
}

/// Proportional reduction `(before - after) / before`, or `None` when
/// `before` is too small to divide by.
pub fn proportional_reduction(before: f64, after: f64) -> Option<f64> {
    if libm::fabs(before) < PSEUDO_R2_EPS {
        None
    } else {
        Some((before - after) / before)
    }
}

pub fn pseudo_r2(average: &LmeFit, qpp: &LmeFit, full: &LmeFit) -> Result<VarianceDecomposition> {
    let mut d = pseudo_r2_partial(average, qpp)?;
    check_same_data(qpp, full)?;
    d.pseudo_r2_0 = proportional_reduction(qpp.sigma2_0, full.sigma2_0);
    d.pseudo_r2_1 = match (qpp.sigma2_1, full.sigma2_1) {
        (Some(a), Some(b)) => proportional_reduction(a, b),
        _ => None,
    };
    Ok(d)
}

/// Residual component only, for designs where no type model was fitted.
pub fn pseudo_r2_partial(average: &LmeFit, qpp: &LmeFit) -> Result<VarianceDecomposition> {
    check_same_data(average, qpp)?;
    Ok(VarianceDecomposition {
        pseudo_r2_eps: proportional_reduction(average.sigma2_eps, qpp.sigma2_eps),
        pseudo_r2_0: None,
        pseudo_r2_1: None,
    })
}

fn check_same_data(a: &LmeFit, b: &LmeFit) -> Result<()> {
    if a.n_obs != b.n_obs || a.n_queries != b.n_queries {
        return Err(Error::InvalidParams(format!(
            "fits come from different designs ({} vs {} observations)",
            a.n_obs, b.n_obs
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sequential selection

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    pub from: LmeModel,
    pub to: LmeModel,
    pub lr_stat: f64,
    pub df: usize,
    pub critical: f64,
    pub p_value: f64,
    pub added_terms: Vec<FixedTerm>,
    pub max_wald_z: f64,
    pub lrt_pass: bool,
    pub wald_pass: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub predictor_order: Vec<String>,
    pub reference_type: String,
    /// Every fitted candidate in fitting order.
    pub fits: Vec<LmeFit>,
    pub steps: Vec<SelectionStep>,
    pub chosen: LmeModel,
    pub decomposition: VarianceDecomposition,
    pub notes: Vec<String>,
}

impl SelectionReport {
    pub fn fit(&self, model: LmeModel) -> Option<&LmeFit> {
        self.fits.iter().find(|f| f.model == model)
    }
}

/// Likelihood-ratio plus Wald comparison of a larger model against the
/// current one.
pub fn compare(current: &LmeFit, candidate: &LmeFit) -> SelectionStep {
    let lr_stat = current.deviance - candidate.deviance;
    let df = candidate.num_params().saturating_sub(current.num_params());
    let critical = chi2_critical(ALPHA, df);
    let added: Vec<&FixedEffect> = candidate
        .fixed
        .iter()
        .filter(|e| current.effect(&e.term).is_none())
        .collect();
    let max_wald_z = added.iter().fold(0.0f64, |m, e| m.max(libm::fabs(e.z)));
    let lrt_pass = df > 0 && lr_stat > critical;
    let wald_pass = max_wald_z > WALD_CRITICAL;
    SelectionStep {
        from: current.model,
        to: candidate.model,
        lr_stat,
        df,
        critical,
        p_value: chi2_sf(lr_stat.max(0.0), df),
        added_terms: added.iter().map(|e| e.term.clone()).collect(),
        max_wald_z,
        lrt_pass,
        wald_pass,
        accepted: lrt_pass && wald_pass,
    }
}

/// Relative slack allowed for rounding when checking that deviance does not
/// increase along the nested chain.
const NESTING_SLACK: f64 = 1e-9;

/// Fits the nested chain and keeps each addition only if it passes both the
/// likelihood-ratio and the Wald test. Type models are compared against the
/// last accepted model; if both type variants pass, the interaction variant
/// must in turn beat the main-effects one.
pub fn select_model(design: &LmeDesign) -> Result<(LmeFit, SelectionReport)> {
    let mut notes = Vec::new();
    let average = fit(design, LmeModel::Average)?;
    let qpp = fit_with_start(design, LmeModel::Qpp, Some(&average.diagnostics.theta))?;
    let mut steps = vec![compare(&average, &qpp)];
    let mut chosen = if steps[0].accepted {
        LmeModel::Qpp
    } else {
        LmeModel::Average
    };
    let mut fits = vec![average, qpp];

    if design.types().len() >= 2 {
        let main = fit_with_start(design, LmeModel::FullMain, Some(&fits[1].diagnostics.theta))?;
        let full = fit_with_start(design, LmeModel::Full, Some(&main.diagnostics.theta))?;
        let current = if chosen == LmeModel::Qpp { &fits[1] } else { &fits[0] };
        let s_main = compare(current, &main);
        let s_full = compare(current, &full);
        let (am, af) = (s_main.accepted, s_full.accepted);
        steps.push(s_main);
        steps.push(s_full);
        match (am, af) {
            (true, true) => {
                let s = compare(&main, &full);
                chosen = if s.accepted {
                    LmeModel::Full
                } else {
                    LmeModel::FullMain
                };
                steps.push(s);
            }
            (true, false) => chosen = LmeModel::FullMain,
            (false, true) => chosen = LmeModel::Full,
            (false, false) => {}
        }
        fits.push(main);
        fits.push(full);
    } else {
        notes.push("only one query type present; type models not fitted".to_string());
    }

    for pair in fits.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.deviance > a.deviance + NESTING_SLACK * libm::fabs(a.deviance).max(1.0) {
            return Err(Error::Degenerate(format!(
                "deviance rose from {} ({}) to {} ({}) along the nested chain",
                a.deviance, a.model, b.deviance, b.model
            )));
        }
    }
    for f in &fits {
        if !f.converged {
            notes.push(format!("{} model did not converge cleanly", f.model));
        }
    }

    let decomposition = if fits.len() == 4 {
        pseudo_r2(&fits[0], &fits[1], &fits[3])?
    } else {
        pseudo_r2_partial(&fits[0], &fits[1])?
    };
    for name in decomposition.negative() {
        notes.push(format!("{name} is negative"));
    }
    let chosen_fit = fits
        .iter()
        .find(|f| f.model == chosen)
        .cloned()
        .ok_or_else(|| Error::InvalidParams("chosen model missing".into()))?;
    let report = SelectionReport {
        predictor_order: design.predictor_order().to_vec(),
        reference_type: design.reference_type().to_string(),
        fits,
        steps,
        chosen,
        decomposition,
        notes,
    };
    Ok((chosen_fit, report))
}

// ---------------------------------------------------------------------------
// simulation

/// Generating process for synthetic designs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub n_predictors: usize,
    pub gamma00: f64,
    pub gamma10: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    /// Correlation of the random intercept and slope.
    pub rho01: f64,
    pub sigma_eps: f64,
    /// Type labels and how many queries each gets.
    pub types: Vec<(String, usize)>,
    /// Added to the intercept of queries of a type.
    pub type_intercept: Vec<(String, f64)>,
    /// Added to the slope of queries of a type.
    pub type_slope: Vec<(String, f64)>,
    pub seed: u64,
}

impl SimulationSpec {
    /// Balanced design with `n_queries` queries of a single type.
    pub fn balanced(n_queries: usize, n_predictors: usize, seed: u64) -> Self {
        Self {
            n_predictors,
            gamma00: 0.30,
            gamma10: -0.01,
            sigma0: 0.05,
            sigma1: 0.005,
            rho01: 0.0,
            sigma_eps: 0.02,
            types: vec![("Factoid".to_string(), n_queries)],
            type_intercept: Vec::new(),
            type_slope: Vec::new(),
            seed,
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, one draw per call
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

pub fn simulate_design(spec: &SimulationSpec) -> Result<LmeDesign> {
    if !(-1.0..=1.0).contains(&spec.rho01) {
        return Err(Error::InvalidParams("rho01 must lie in [-1, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lookup = |table: &[(String, f64)], t: &str| {
        table
            .iter()
            .find(|(l, _)| l == t)
            .map_or(0.0, |(_, v)| *v)
    };
    let mut rows = Vec::new();
    let mut qn = 0;
    for (label, count) in &spec.types {
        let b0 = lookup(&spec.type_intercept, label);
        let b1 = lookup(&spec.type_slope, label);
        for _ in 0..*count {
            qn += 1;
            let query_id = format!("q{qn:04}");
            let z1 = standard_normal(&mut rng);
            let z2 = standard_normal(&mut rng);
            let u0 = spec.sigma0 * z1;
            let u1 = spec.sigma1 * (spec.rho01 * z1 + libm::sqrt(1.0 - spec.rho01 * spec.rho01) * z2);
            for j in 0..spec.n_predictors {
                let x = j as f64;
                let e = spec.sigma_eps * standard_normal(&mut rng);
                rows.push(LmeRow {
                    query_id: query_id.clone(),
                    predictor_index: j,
                    query_type: label.clone(),
                    sare: spec.gamma00 + b0 + u0 + (spec.gamma10 + b1 + u1) * x + e,
                });
            }
        }
    }
    let order = (0..spec.n_predictors).map(|j| format!("p{j}")).collect();
    LmeDesign::from_rows(rows, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_table() -> (SareTable, QueryTypeMap) {
        let mut t = SareTable::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        t.insert_row("q1", vec![Some(0.1), Some(0.2), Some(0.3)]).unwrap();
        t.insert_row("q2", vec![Some(0.4), Some(0.5), Some(0.6)]).unwrap();
        let mut types = QueryTypeMap::new();
        types.insert("q1", "Factoid", true).unwrap();
        types.insert("q2", "Reason", true).unwrap();
        (t, types)
    }

    #[test]
    fn design_is_long_format() {
        let (t, types) = tiny_table();
        let order: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let d = build_design(&t, &types, &order).unwrap();
        assert_eq!(d.rows().len(), 6);
        // tie between two singletons goes to the alphabetically first label
        assert_eq!(d.reference_type(), "Factoid");
    }

    #[test]
    fn design_order_follows_argument() {
        let (t, types) = tiny_table();
        let order: Vec<String> = ["c", "a", "b"].map(String::from).to_vec();
        let d = build_design(&t, &types, &order).unwrap();
        let r = d
            .rows()
            .iter()
            .find(|r| r.query_id == "q1" && r.predictor_index == 0)
            .unwrap();
        assert_eq!(r.sare, 0.3);
    }

    #[test]
    fn design_missing_type_is_named() {
        let (mut t, types) = tiny_table();
        t.insert_row("q7", vec![Some(0.1), Some(0.1), Some(0.1)]).unwrap();
        let order: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        assert_eq!(
            build_design(&t, &types, &order),
            Err(Error::MissingType(vec!["q7".into()]))
        );
    }

    #[test]
    fn design_missing_cell_rejected() {
        let (mut t, types) = tiny_table();
        t.insert_row("q3", vec![Some(0.1), None, Some(0.1)]).unwrap();
        let mut types = types;
        types.insert("q3", "Reason", true).unwrap();
        let order: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        assert!(matches!(build_design(&t, &types, &order), Err(Error::MissingInput(_))));
    }

    #[test]
    fn proportional_reduction_cases() {
        assert!((proportional_reduction(0.04, 0.03).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(proportional_reduction(0.02, 0.02), Some(0.0));
        assert_eq!(proportional_reduction(1e-13, 0.0), None);
    }

    #[test]
    fn constant_data_floors_residual() {
        let mut spec = SimulationSpec::balanced(6, 4, 1);
        spec.sigma0 = 0.0;
        spec.sigma1 = 0.0;
        spec.sigma_eps = 0.0;
        spec.gamma10 = 0.0;
        let d = simulate_design(&spec).unwrap();
        let f = fit(&d, LmeModel::Average).unwrap();
        assert!((f.fixed[0].estimate - 0.30).abs() < 1e-12);
        assert_eq!(f.sigma2_eps, SIGMA2_FLOOR);
        assert!(!f.converged);
        let g = fit(&d, LmeModel::Qpp).unwrap();
        assert!(g.fixed[1].estimate.abs() < 1e-9);
        assert!(g.sigma2_1.unwrap() < 1e-12);
    }

    #[test]
    fn full_model_needs_two_queries_per_type() {
        let mut spec = SimulationSpec::balanced(5, 3, 2);
        spec.types = vec![("Factoid".into(), 5), ("Reason".into(), 1)];
        let d = simulate_design(&spec).unwrap();
        assert_eq!(
            fit(&d, LmeModel::Full).unwrap_err(),
            Error::SingularType("Reason".into())
        );
        assert!(fit(&d, LmeModel::Qpp).is_ok());
    }

    #[test]
    fn model_names_round_trip() {
        for m in LmeModel::ALL {
            assert_eq!(m.name().parse::<LmeModel>().unwrap(), m);
        }
        assert_eq!(LmeModel::Full.theta_len(), 3);
        assert_eq!(LmeModel::Average.theta_len(), 1);
    }
}
