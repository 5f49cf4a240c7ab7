//! Flat JSON reports.
//!
//! Every report is one JSON object whose values are numbers, strings,
//! booleans or null. Floats go through `serde_json`, which writes the
//! shortest decimal that parses back to the same `f64`, so no precision is
//! lost. Non-finite values become `null`.

use serde_json::{Map, Value};

use crate::bounds::{theorem1_bound, theorem2};
use crate::data::WorkingDataset;
use crate::driver::{Algorithm, Experiment, TrainReport};
use crate::oracle::{OracleResult, SandwichVerdict};

pub type Report = Map<String, Value>;

/// Shape of the working dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSummary {
    pub m: usize,
    pub d: usize,
    pub r: f64,
    pub delta: f64,
    pub rho: f64,
    pub scale: f64,
}

impl DatasetSummary {
    pub fn of(ds: &WorkingDataset) -> Self {
        Self {
            m: ds.len(),
            d: ds.feature_dim(),
            r: ds.r(),
            delta: ds.delta(),
            rho: ds.rho(),
            scale: ds.scale(),
        }
    }
}

pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn insert_dataset(out: &mut Report, s: &DatasetSummary) {
    out.insert("m".into(), s.m.into());
    out.insert("d".into(), s.d.into());
    out.insert("r".into(), num(s.r));
    out.insert("delta".into(), num(s.delta));
    out.insert("rho".into(), num(s.rho));
    out.insert("scale".into(), num(s.scale));
}

/// Adds the training fields under `prefix`.
pub fn insert_train(out: &mut Report, prefix: &str, r: &TrainReport) {
    let mut put = |k: &str, v: Value| {
        out.insert(format!("{prefix}{k}"), v);
    };
    put("algorithm", r.algorithm.to_string().into());
    put("epsilon", opt(r.epsilon));
    put("beta", opt(r.beta));
    put("converged", r.converged.into());
    put("t_c", r.t_c.into());
    put("epochs", r.epochs.into());
    put("gamma_prime_d", num(r.gamma_prime_d));
    put("norm_a", num(r.norm_a));
    put("margin_upper_bound", num(r.margin_upper_bound));
    put("after_run_estimate", num(r.after_run_estimate));
    put("stages", r.stages.len().into());
    for (i, s) in r.stages.iter().enumerate() {
        put(&format!("stage_{i}_epsilon"), num(s.epsilon));
        put(&format!("stage_{i}_t_c"), s.t_c.into());
        put(&format!("stage_{i}_epochs"), s.epochs.into());
        put(&format!("stage_{i}_norm_a"), num(s.norm_a));
    }
    put("eq6_max_residual", opt(r.eq6_max_residual));
    put("max_norm_drift", num(r.max_norm_drift));
    put("seconds", num(r.seconds));
}

/// Bound evaluations for a run, given `γ_d`. Fixed-margin runs use the
/// accuracy `1 - β/γ_d` their `β` corresponds to; bounds that do not apply
/// are `null`.
pub fn insert_bounds(out: &mut Report, prefix: &str, r: &TrainReport, radius: f64, gamma_d: f64) {
    let eps = match r.algorithm {
        Algorithm::Pfm => r.beta.map(|b| 1.0 - b / gamma_d),
        _ => r.epsilon,
    };
    let t2 = eps.and_then(|e| theorem2(e, radius, gamma_d).ok());
    let t1 = match r.algorithm {
        Algorithm::Pfm => eps.and_then(|e| theorem1_bound(e, radius, gamma_d).ok()),
        _ => None,
    };
    out.insert(format!("{prefix}gamma_d"), num(gamma_d));
    out.insert(format!("{prefix}bound_epsilon"), opt(eps));
    out.insert(format!("{prefix}theorem2_loose"), opt(t2.map(|b| b.loose)));
    out.insert(format!("{prefix}theorem2_tight"), opt(t2.map(|b| b.tight)));
    out.insert(format!("{prefix}theorem1"), opt(t1));
}

pub fn insert_oracle(out: &mut Report, o: &OracleResult, v: &SandwichVerdict) {
    out.insert("oracle_gamma_d_lower".into(), num(o.lower));
    out.insert("oracle_iterations".into(), o.iterations.into());
    out.insert("oracle_gap".into(), num(o.gap));
    out.insert("sandwich".into(), if v.pass { "pass" } else { "fail" }.into());
    out.insert("sandwich_failures".into(), v.failures.join("; ").into());
}

/// Report of a single training run.
pub fn train_report(ds: &DatasetSummary, seed: u64, r: &TrainReport, gamma_d: Option<f64>) -> Report {
    let mut out = Report::new();
    insert_dataset(&mut out, ds);
    out.insert("seed".into(), seed.into());
    insert_train(&mut out, "", r);
    if let Some(g) = gamma_d {
        insert_bounds(&mut out, "", r, ds.r, g);
    }
    out
}

/// Report of a run that hit the epoch guard.
pub fn failure_report(ds: &DatasetSummary, seed: u64, algorithm: Algorithm, epochs: u64, updates: u64) -> Report {
    let mut out = Report::new();
    insert_dataset(&mut out, ds);
    out.insert("seed".into(), seed.into());
    out.insert("algorithm".into(), algorithm.to_string().into());
    out.insert("converged".into(), false.into());
    out.insert("epochs".into(), epochs.into());
    out.insert("t_c".into(), updates.into());
    out
}

/// Paired report: dynamic run under `dynamic_`, fixed run under `fixed_`,
/// and their comparison.
pub fn experiment_report(ds: &DatasetSummary, seed: u64, e: &Experiment, gamma_d: Option<f64>) -> Report {
    let mut out = Report::new();
    insert_dataset(&mut out, ds);
    out.insert("seed".into(), seed.into());
    insert_train(&mut out, "dynamic_", &e.dynamic.report);
    insert_train(&mut out, "fixed_", &e.fixed.report);
    if let Some(g) = gamma_d {
        insert_bounds(&mut out, "dynamic_", &e.dynamic.report, ds.r, g);
        insert_bounds(&mut out, "fixed_", &e.fixed.report, ds.r, g);
    }
    out.insert("update_ratio".into(), num(e.update_ratio()));
    out.insert(
        "margin_ratio".into(),
        num(e.fixed.report.gamma_prime_d / e.dynamic.report.gamma_prime_d),
    );
    out
}

pub fn to_json(r: &Report) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("maps of plain values serialize");
    s.push('\n');
    s
}

/// Drops wall-clock fields, for comparing repeated runs.
pub fn without_timings(r: &Report) -> Report {
    r.iter()
        .filter(|(k, _)| !k.ends_with("seconds"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}
