//! JSON rendering of a model-selection report.

use qpp_core::lme::{FixedEffect, LmeFit, SelectionStep};
use qpp_core::SelectionReport;
use serde_json::{json, Value};

use crate::table::Provenance;

fn fixed(e: &FixedEffect) -> Value {
    json!({
        "term": e.term.to_string(),
        "estimate": e.estimate,
        "se": e.se,
        "z": e.z,
        "p_value": e.p_value,
    })
}

fn fit(f: &LmeFit) -> Value {
    json!({
        "model": f.model.name(),
        "loglik": f.loglik,
        "deviance": f.deviance,
        "num_params": f.num_params(),
        "converged": f.converged,
        "n_obs": f.n_obs,
        "n_queries": f.n_queries,
        "fixed": f.fixed.iter().map(fixed).collect::<Vec<_>>(),
        "variance": {
            "intercept": f.sigma2_0,
            "intercept_slope_cov": f.sigma_01,
            "slope": f.sigma2_1,
            "residual": f.sigma2_eps,
        },
        "diagnostics": {
            "theta": f.diagnostics.theta,
            "start_logliks": f.diagnostics.start_logliks,
            "evaluations": f.diagnostics.evaluations,
            "optimizer_converged": f.diagnostics.optimizer_converged,
            "gradient_max": f.diagnostics.gradient_max,
            "gradient_ok": f.diagnostics.gradient_ok,
            "residual_floored": f.diagnostics.sigma2_floored,
        },
    })
}

fn step(s: &SelectionStep) -> Value {
    json!({
        "from": s.from.name(),
        "to": s.to.name(),
        "lr_stat": s.lr_stat,
        "df": s.df,
        "critical": s.critical,
        "p_value": s.p_value,
        "added_terms": s.added_terms.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "max_wald_z": s.max_wald_z,
        "lrt_pass": s.lrt_pass,
        "wald_pass": s.wald_pass,
        "accepted": s.accepted,
    })
}

pub fn selection_json(report: &SelectionReport, provenance: &Provenance) -> Value {
    let d = &report.decomposition;
    json!({
        "qpp_version": env!("CARGO_PKG_VERSION"),
        "command": provenance.command,
        "seed": provenance.seed,
        "params": provenance.params.iter().map(|(k, v)| json!([k, v])).collect::<Vec<_>>(),
        "created": provenance.created,
        "predictor_order": report.predictor_order,
        "reference_type": report.reference_type,
        "chosen": report.chosen.name(),
        "fits": report.fits.iter().map(fit).collect::<Vec<_>>(),
        "steps": report.steps.iter().map(step).collect::<Vec<_>>(),
        "pseudo_r2": {
            "residual": d.pseudo_r2_eps,
            "intercept": d.pseudo_r2_0,
            "slope": d.pseudo_r2_1,
            "negative": d.negative(),
        },
        "notes": report.notes,
    })
}

/// Pretty-printed with a trailing newline.
pub fn render(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).unwrap_or_else(|_| "null".into());
    s.push('\n');
    s
}
