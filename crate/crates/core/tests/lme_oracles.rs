use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qpp_core::lme::{
    fit, pseudo_r2, select_model, simulate_design, FixedTerm, LmeDesign, LmeModel, LmeProblem,
    LmeRow, SimulationSpec, GRADIENT_TOL,
};

/// Dense per-query design matrices built straight from the rows.
struct Dense {
    groups: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>,
}

fn dense_design(design: &LmeDesign, model: LmeModel) -> Dense {
    let others: Vec<&String> = design
        .types()
        .iter()
        .filter(|t| *t != design.reference_type())
        .collect();
    let mut by_query: std::collections::BTreeMap<&str, Vec<&LmeRow>> = Default::default();
    for r in design.rows() {
        by_query.entry(&r.query_id).or_default().push(r);
    }
    let groups = by_query
        .values()
        .map(|rows| {
            let mut xs = Vec::new();
            let mut zs = Vec::new();
            let mut ys = Vec::new();
            for r in rows {
                let x = r.predictor_index as f64 - design.slope_origin();
                let mut xr = vec![1.0];
                let mut zr = vec![1.0];
                if model.has_slope() {
                    xr.push(x);
                    zr.push(x);
                }
                if model.has_type_main() {
                    xr.extend(others.iter().map(|t| if r.query_type == **t { 1.0 } else { 0.0 }));
                }
                if model.has_type_slope() {
                    xr.extend(others.iter().map(|t| if r.query_type == **t { x } else { 0.0 }));
                }
                xs.push(xr);
                zs.push(zr);
                ys.push(r.sare);
            }
            let p = xs[0].len();
            let q = zs[0].len();
            (
                DMatrix::from_fn(xs.len(), p, |i, j| xs[i][j]),
                DMatrix::from_fn(zs.len(), q, |i, j| zs[i][j]),
                DVector::from_vec(ys),
            )
        })
        .collect();
    Dense { groups }
}

/// Marginal Gaussian log-likelihood with explicit V_i, beta by GLS.
fn direct_loglik(d: &Dense, psi: &DMatrix<f64>, sigma2: f64) -> (f64, DVector<f64>) {
    let p = d.groups[0].0.ncols();
    let mut xtvx = DMatrix::zeros(p, p);
    let mut xtvy = DVector::zeros(p);
    let mut vinvs = Vec::new();
    for (x, z, y) in &d.groups {
        let v = z * psi * z.transpose() + DMatrix::identity(y.len(), y.len()) * sigma2;
        let vinv = v.clone().try_inverse().unwrap();
        xtvx += x.transpose() * &vinv * x;
        xtvy += x.transpose() * &vinv * y;
        vinvs.push((v, vinv));
    }
    let beta = xtvx.try_inverse().unwrap() * xtvy;
    let mut ll = 0.0;
    for ((x, _, y), (v, vinv)) in d.groups.iter().zip(&vinvs) {
        let r = y - x * &beta;
        let quad = (r.transpose() * vinv * &r)[(0, 0)];
        ll += -0.5 * (y.len() as f64 * (2.0 * std::f64::consts::PI).ln() + v.determinant().ln() + quad);
    }
    (ll, beta)
}

fn psi_matrix(fit: &qpp_core::LmeFit) -> DMatrix<f64> {
    match (fit.sigma_01, fit.sigma2_1) {
        (Some(c), Some(s1)) => DMatrix::from_row_slice(2, 2, &[fit.sigma2_0, c, c, s1]),
        _ => DMatrix::from_element(1, 1, fit.sigma2_0),
    }
}

fn typed_spec(seed: u64) -> SimulationSpec {
    let mut s = SimulationSpec::balanced(0, 6, seed);
    s.types = vec![("Factoid".into(), 12), ("Reason".into(), 8), ("Experience".into(), 6)];
    s.type_slope = vec![("Experience".into(), 0.03)];
    s
}

#[test]
fn profiled_likelihood_equals_direct_likelihood() {
    let design = simulate_design(&typed_spec(5)).unwrap();
    for model in LmeModel::ALL {
        let f = fit(&design, model).unwrap();
        let (ll, beta) = direct_loglik(&dense_design(&design, model), &psi_matrix(&f), f.sigma2_eps);
        assert!((ll - f.loglik).abs() <= 1e-9 * ll.abs(), "{model}: {ll} vs {}", f.loglik);
        for (e, b) in f.fixed.iter().zip(beta.iter()) {
            assert!((e.estimate - b).abs() <= 1e-8 * (1.0 + b.abs()), "{model} {}", e.term);
        }
    }
}

#[test]
fn grid_search_does_not_beat_the_fit() {
    let design = simulate_design(&SimulationSpec::balanced(120, 8, 0)).unwrap();
    let f = fit(&design, LmeModel::Qpp).unwrap();
    let d = dense_design(&design, LmeModel::Qpp);
    let steps = [-0.3, -0.15, 0.0, 0.15, 0.3];
    let s1 = f.sigma2_1.unwrap();
    let c_scale = (f.sigma2_0 * s1).sqrt();
    let mut best = (f64::NEG_INFINITY, [0.0; 4]);
    for a in steps {
        for b in steps {
            for c in steps {
                for e in steps {
                    let s0 = f.sigma2_0 * (1.0 + a);
                    let s11 = s1 * (1.0 + b);
                    let cov = f.sigma_01.unwrap() + c * c_scale;
                    let se = f.sigma2_eps * (1.0 + e);
                    if cov * cov >= s0 * s11 {
                        continue;
                    }
                    let psi = DMatrix::from_row_slice(2, 2, &[s0, cov, cov, s11]);
                    let (ll, _) = direct_loglik(&d, &psi, se);
                    if ll > best.0 {
                        best = (ll, [a, b, c, e]);
                    }
                }
            }
        }
    }
    assert!(best.0 <= f.loglik + 1e-9 * f.loglik.abs(), "grid {} > fit {}", best.0, f.loglik);
    assert_eq!(best.1, [0.0; 4], "grid maximum away from the fitted point");
}

#[test]
fn zero_covariance_reduces_to_ols() {
    let design = simulate_design(&typed_spec(11)).unwrap();
    for model in LmeModel::ALL {
        let problem = LmeProblem::new(&design, model).unwrap();
        let pt = problem.evaluate_at(&vec![0.0; model.theta_len()]).unwrap();
        let d = dense_design(&design, model);
        let p = d.groups[0].0.ncols();
        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut n = 0;
        for (x, _, y) in &d.groups {
            xtx += x.transpose() * x;
            xty += x.transpose() * y;
            n += y.len();
        }
        let beta = xtx.try_inverse().unwrap() * xty;
        let rss: f64 = d.groups.iter().map(|(x, _, y)| (y - x * &beta).norm_squared()).sum();
        for (a, b) in pt.beta.iter().zip(beta.iter()) {
            assert!((a - b).abs() <= 1e-8, "{model}: {a} vs {b}");
        }
        assert!((pt.sigma2_eps - rss / n as f64).abs() <= 1e-8);
    }
}

#[test]
fn loglik_invariant_to_row_and_query_order() {
    let design = simulate_design(&typed_spec(3)).unwrap();
    let f = fit(&design, LmeModel::Full).unwrap();
    let mut rows = design.rows().to_vec();
    rows.reverse();
    // renaming reverses the order in which queries are visited
    let n = design.num_queries();
    for r in &mut rows {
        let num: usize = r.query_id[1..].parse().unwrap();
        r.query_id = format!("z{:04}", n + 1 - num);
    }
    let shuffled = LmeDesign::from_rows(rows, design.predictor_order().to_vec()).unwrap();
    let problem_a = LmeProblem::new(&design, LmeModel::Full).unwrap();
    let problem_b = LmeProblem::new(&shuffled, LmeModel::Full).unwrap();
    let theta = &f.diagnostics.theta;
    let a = problem_a.evaluate_at(theta).unwrap().loglik;
    let b = problem_b.evaluate_at(theta).unwrap().loglik;
    assert!((a - b).abs() <= 1e-11 * a.abs());
    let g = fit(&shuffled, LmeModel::Full).unwrap();
    assert!((f.loglik - g.loglik).abs() <= 1e-9 * f.loglik.abs());
}

#[test]
fn recentering_changes_only_the_intercept() {
    let design = simulate_design(&SimulationSpec::balanced(60, 8, 21)).unwrap();
    let f = fit(&design, LmeModel::Qpp).unwrap();
    let g = fit(&design.clone().with_slope_origin(3.5), LmeModel::Qpp).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    assert!(rel(f.deviance, g.deviance) < 1e-8);
    assert!(rel(f.sigma2_eps, g.sigma2_eps) < 1e-8, "{:?}\n{:?}", f, g);
    let slope = |x: &qpp_core::LmeFit| x.estimate(&FixedTerm::Slope).unwrap();
    assert!(rel(slope(&f), slope(&g)) < 1e-8, "{} vs {}", slope(&f), slope(&g));
    let i0 = f.estimate(&FixedTerm::Intercept).unwrap();
    let i1 = g.estimate(&FixedTerm::Intercept).unwrap();
    assert!((i1 - (i0 + 3.5 * slope(&f))).abs() < 1e-8);
}

#[test]
fn fixed_effect_se_matches_numerical_information() {
    // with variance parameters held at the optimum, the log-likelihood is
    // quadratic in beta; its numerical curvature gives the same SEs
    let design = simulate_design(&typed_spec(8)).unwrap();
    let f = fit(&design, LmeModel::FullMain).unwrap();
    let d = dense_design(&design, LmeModel::FullMain);
    let psi = psi_matrix(&f);
    let beta: Vec<f64> = f.fixed.iter().map(|e| e.estimate).collect();
    let ll_at = |b: &[f64]| -> f64 {
        let bv = DVector::from_column_slice(b);
        d.groups
            .iter()
            .map(|(x, z, y)| {
                let v = z * &psi * z.transpose() + DMatrix::identity(y.len(), y.len()) * f.sigma2_eps;
                let r = y - x * &bv;
                -0.5 * (r.transpose() * v.try_inverse().unwrap() * &r)[(0, 0)]
            })
            .sum()
    };
    let p = beta.len();
    let h = 1e-3;
    let mut info = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut pp = beta.clone();
            let mut pm = beta.clone();
            let mut mp = beta.clone();
            let mut mm = beta.clone();
            pp[i] += h;
            pp[j] += h;
            pm[i] += h;
            pm[j] -= h;
            mp[i] -= h;
            mp[j] += h;
            mm[i] -= h;
            mm[j] -= h;
            info[(i, j)] = -(ll_at(&pp) - ll_at(&pm) - ll_at(&mp) + ll_at(&mm)) / (4.0 * h * h);
        }
    }
    let cov = info.try_inverse().unwrap();
    for (i, e) in f.fixed.iter().enumerate() {
        let se = cov[(i, i)].sqrt();
        assert!((se - e.se).abs() <= 1e-4 * e.se, "{}: {se} vs {}", e.term, e.se);
    }
}

#[test]
fn gradient_check_holds_at_every_optimum() {
    for seed in 0..4 {
        let design = simulate_design(&typed_spec(100 + seed)).unwrap();
        for model in LmeModel::ALL {
            let f = fit(&design, model).unwrap();
            assert!(f.diagnostics.gradient_ok, "{model} seed {seed}: {}", f.diagnostics.gradient_max);
            assert!(f.diagnostics.gradient_max <= GRADIENT_TOL * f.loglik.abs());
            assert!(f.converged);
            assert!(f.sigma2_eps > 0.0 && f.sigma2_0 >= 0.0);
            if let (Some(c), Some(s1)) = (f.sigma_01, f.sigma2_1) {
                assert!(s1 >= 0.0 && c * c <= f.sigma2_0 * s1 * (1.0 + 1e-9));
            }
            assert!((f.deviance + 2.0 * f.loglik).abs() < 1e-12 * f.deviance.abs());
        }
    }
}

fn assert_nested(design: &LmeDesign) {
    let (_, report) = select_model(design).unwrap();
    let devs: Vec<f64> = report.fits.iter().map(|f| f.deviance).collect();
    for w in devs.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{devs:?}");
    }
}

#[test]
fn nesting_on_adversarial_designs() {
    // constant response
    let mut s = typed_spec(1);
    s.sigma0 = 0.0;
    s.sigma1 = 0.0;
    s.sigma_eps = 0.0;
    s.gamma10 = 0.0;
    s.type_slope.clear();
    assert_nested(&simulate_design(&s).unwrap());
    // tiny residual noise, large random effects
    let mut s = typed_spec(2);
    s.sigma_eps = 1e-6;
    s.sigma0 = 1.0;
    assert_nested(&simulate_design(&s).unwrap());
    // no between-query variation at all
    let mut s = typed_spec(3);
    s.sigma0 = 0.0;
    s.sigma1 = 0.0;
    assert_nested(&simulate_design(&s).unwrap());
    // perfectly correlated intercepts and slopes
    let mut s = typed_spec(4);
    s.rho01 = 1.0;
    s.sigma1 = 0.05;
    assert_nested(&simulate_design(&s).unwrap());
    // two predictors, two queries per minority type
    let mut s = SimulationSpec::balanced(0, 2, 5);
    s.types = vec![("A".into(), 3), ("B".into(), 2)];
    assert_nested(&simulate_design(&s).unwrap());
    // large offsets
    let mut s = typed_spec(6);
    s.gamma00 = 1e4;
    assert_nested(&simulate_design(&s).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nesting_on_random_designs(
        seed in 0u64..10_000,
        j in 2usize..6,
        sizes in (2usize..6, 2usize..6),
        sigma0 in 0.0f64..0.2,
        sigma1 in 0.0f64..0.05,
        sigma_eps in 0.001f64..0.1,
    ) {
        let mut s = SimulationSpec::balanced(0, j, seed);
        s.types = vec![("A".into(), sizes.0), ("B".into(), sizes.1)];
        s.sigma0 = sigma0;
        s.sigma1 = sigma1;
        s.sigma_eps = sigma_eps;
        assert_nested(&simulate_design(&s).unwrap());
    }
}

#[test]
fn selection_examples() {
    let types = vec![("Factoid".to_string(), 50), ("Experience".to_string(), 35), ("Reason".to_string(), 35)];
    let mut noise = SimulationSpec::balanced(0, 8, 77);
    noise.types = types.clone();
    noise.gamma10 = 0.0;
    noise.sigma1 = 0.0;
    let (chosen, _) = select_model(&simulate_design(&noise).unwrap()).unwrap();
    assert_eq!(chosen.model, LmeModel::Average);

    let mut slope = noise.clone();
    slope.gamma10 = -0.01;
    slope.sigma1 = 0.005;
    let (chosen, _) = select_model(&simulate_design(&slope).unwrap()).unwrap();
    assert_eq!(chosen.model, LmeModel::Qpp);

    let mut inter = slope.clone();
    inter.type_slope = vec![("Experience".into(), 0.05)];
    let (chosen, report) = select_model(&simulate_design(&inter).unwrap()).unwrap();
    assert_eq!(chosen.model, LmeModel::Full);
    assert!(chosen.effect(&FixedTerm::TypeSlope("Experience".into())).unwrap().z.abs() > 1.96);
    assert!(report.decomposition.pseudo_r2_1.unwrap() > 0.0);
}

#[test]
fn pseudo_r2_identities() {
    let design = simulate_design(&typed_spec(9)).unwrap();
    let avg = fit(&design, LmeModel::Average).unwrap();
    let qpp = fit(&design, LmeModel::Qpp).unwrap();
    let d = pseudo_r2(&avg, &qpp, &qpp).unwrap();
    assert_eq!(d.pseudo_r2_0, Some(0.0));
    assert_eq!(d.pseudo_r2_1, Some(0.0));

    let mut a = avg.clone();
    let mut b = qpp.clone();
    a.sigma2_eps = 0.04;
    b.sigma2_eps = 0.03;
    let d = pseudo_r2(&a, &b, &qpp).unwrap();
    assert!((d.pseudo_r2_eps.unwrap() - 0.25).abs() < 1e-15);

    let other = fit(&simulate_design(&typed_spec(10)).unwrap(), LmeModel::Qpp);
    let mut other = other.unwrap();
    other.n_obs += 1;
    assert!(pseudo_r2(&avg, &other, &qpp).is_err());
}
