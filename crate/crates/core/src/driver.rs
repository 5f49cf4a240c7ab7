//! Complete training runs.
//!
//! * `pdm`: dynamic margin at a single accuracy `ε`. Multiple updates start
//!   after the first full epoch, and that epoch builds its level-1 set with
//!   `c1 = 1.1`.
//! * `pdm-succ`: stages `ε₀ = 1/2, ε_{n+1} = max(ε_n/η, ε)` continuing one
//!   weight state; multiple updates from the start.
//! * `pfm`: fixed margin `β`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::after_run_estimate;
use crate::data::WorkingDataset;
use crate::schedule::{
    run_until_convergence, MultipleUpdates, Presentation, ScheduleError, ScheduleOptions,
    UpdateEvent, DEFAULT_MAX_EPOCHS,
};
use crate::state::{MarginRule, StateError, WeightState};

/// First-epoch level-1 multiplier for plain PDM.
pub const FIRST_EPOCH_C1: f64 = 1.1;
pub const DEFAULT_ETA: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Pdm,
    PdmSucc,
    Pfm,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Pdm => "pdm",
            Algorithm::PdmSucc => "pdm-succ",
            Algorithm::Pfm => "pfm",
        })
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no convergence after {epochs} full epochs ({updates} updates)")]
    NotConverged { epochs: u64, updates: u64 },
    #[error(transparent)]
    State(#[from] StateError),
}

impl From<ScheduleError> for TrainError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::NotConverged { epochs, updates } => TrainError::NotConverged { epochs, updates },
            ScheduleError::State(s) => TrainError::State(s),
            ScheduleError::Config(c) => TrainError::Config(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub eta: f64,
    pub presentation: Presentation,
    pub multiple_updates: bool,
    pub instrument_eq6: bool,
    pub max_epochs: u64,
}

impl RunConfig {
    pub fn pdm(epsilon: f64) -> Self {
        Self {
            algorithm: Algorithm::Pdm,
            epsilon: Some(epsilon),
            ..Self::base()
        }
    }

    pub fn pdm_succ(epsilon: f64, eta: f64) -> Self {
        Self {
            algorithm: Algorithm::PdmSucc,
            epsilon: Some(epsilon),
            eta,
            ..Self::base()
        }
    }

    pub fn pfm(beta: f64) -> Self {
        Self {
            algorithm: Algorithm::Pfm,
            beta: Some(beta),
            ..Self::base()
        }
    }

    fn base() -> Self {
        Self {
            algorithm: Algorithm::Pdm,
            epsilon: None,
            beta: None,
            eta: DEFAULT_ETA,
            presentation: Presentation::default(),
            multiple_updates: true,
            instrument_eq6: false,
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }

    pub fn with_presentation(mut self, p: Presentation) -> Self {
        self.presentation = p;
        self
    }

    pub fn with_max_epochs(mut self, n: u64) -> Self {
        self.max_epochs = n;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let cfg = |m: String| Err(TrainError::Config(m));
        match self.algorithm {
            Algorithm::Pdm | Algorithm::PdmSucc => {
                if self.beta.is_some() {
                    return cfg(format!("{} takes --epsilon, not --beta", self.algorithm));
                }
                let Some(eps) = self.epsilon else {
                    return cfg(format!("{} requires epsilon", self.algorithm));
                };
                if !(eps > 0.0 && eps <= 1.0) {
                    return cfg(format!("epsilon must be in (0, 1], got {eps}"));
                }
                if self.algorithm == Algorithm::PdmSucc {
                    if !(eps <= 0.5) {
                        return cfg(format!("pdm-succ needs epsilon <= 1/2, got {eps}"));
                    }
                    if !(self.eta > 1.0 && self.eta.is_finite()) {
                        return cfg(format!("eta must be > 1, got {}", self.eta));
                    }
                }
            }
            Algorithm::Pfm => {
                if self.epsilon.is_some() {
                    return cfg("pfm takes --beta, not --epsilon".into());
                }
                let Some(beta) = self.beta else {
                    return cfg("pfm requires beta".into());
                };
                if !(beta > 0.0 && beta.is_finite()) {
                    return cfg(format!("beta must be > 0, got {beta}"));
                }
            }
        }
        if self.max_epochs == 0 {
            return cfg("max_epochs must be positive".into());
        }
        Ok(())
    }
}

/// One stage of a successive-run schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub epsilon: f64,
    /// Cumulative updates at the end of the stage.
    pub t_c: u64,
    pub epochs: u64,
    /// `‖a‖` at the end of the stage.
    pub norm_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub converged: bool,
    pub t_c: u64,
    pub epochs: u64,
    pub gamma_prime_d: f64,
    pub norm_a: f64,
    /// `‖a‖/t_c`, the running upper bound on `γ_d`.
    pub margin_upper_bound: f64,
    pub after_run_estimate: f64,
    pub stages: Vec<Stage>,
    /// Largest relative residual of the consecutive-ratio identity; only
    /// with instrumentation.
    pub eq6_max_residual: Option<f64>,
    pub max_norm_drift: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub state: WeightState,
    pub report: TrainReport,
}

/// `ε₀ = 1/2, ε_{n+1} = max(ε_n/η, ε_target)`, ending exactly at the target.
pub fn stage_schedule(epsilon_target: f64, eta: f64) -> Vec<f64> {
    let mut out = vec![0.5];
    let mut e = 0.5;
    while e > epsilon_target {
        e = (e / eta).max(epsilon_target);
        out.push(e);
    }
    out
}

fn schedule_options(cfg: &RunConfig, multiple: MultipleUpdates, first_c1: Option<f64>) -> ScheduleOptions {
    ScheduleOptions {
        presentation: cfg.presentation,
        multiple,
        first_epoch_c1: first_c1,
        max_epochs: cfg.max_epochs,
        epoch_offset: 0,
    }
}

struct Instrument<'a, F> {
    enabled: bool,
    worst: f64,
    user: &'a mut F,
}

impl<F: FnMut(&UpdateEvent)> Instrument<'_, F> {
    fn on(&mut self, ev: &UpdateEvent) {
        if self.enabled {
            self.worst = self.worst.max(ev.eq6_max_relative_residual());
        }
        (self.user)(ev);
    }
}

fn finish(
    cfg: &RunConfig,
    ds: &WorkingDataset,
    state: WeightState,
    epochs: u64,
    stages: Vec<Stage>,
    eq6: Option<f64>,
    drift: f64,
    elapsed: Duration,
) -> Result<Trained, TrainError> {
    let margin = state.evaluate_margin(ds)?;
    let t_c = state.t();
    let norm_a = state.norm();
    let est = after_run_estimate(margin.gamma_prime_d, t_c, norm_a).unwrap_or(f64::NAN);
    Ok(Trained {
        report: TrainReport {
            algorithm: cfg.algorithm,
            epsilon: cfg.epsilon,
            beta: cfg.beta,
            converged: true,
            t_c,
            epochs,
            gamma_prime_d: margin.gamma_prime_d,
            norm_a,
            margin_upper_bound: norm_a / t_c as f64,
            after_run_estimate: est,
            stages,
            eq6_max_residual: eq6,
            max_norm_drift: drift,
            seconds: elapsed.as_secs_f64(),
        },
        state,
    })
}

/// Runs `cfg` on `ds`, calling `observer` after every update when
/// `observe` is set (instrumentation always observes).
pub fn train_observed<F: FnMut(&UpdateEvent)>(
    ds: &WorkingDataset,
    cfg: &RunConfig,
    observe: bool,
    mut observer: F,
) -> Result<Trained, TrainError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = WeightState::new(ds);
    let mut ins = Instrument {
        enabled: cfg.instrument_eq6,
        worst: 0.0,
        user: &mut observer,
    };
    let watch = observe || cfg.instrument_eq6;
    let multiple = |m: MultipleUpdates| if cfg.multiple_updates { m } else { MultipleUpdates::Off };

    let (epochs, stages, drift) = match cfg.algorithm {
        Algorithm::Pdm => {
            let eps = cfg.epsilon.expect("validated");
            let opts = schedule_options(cfg, multiple(MultipleUpdates::AfterFirstEpoch), Some(FIRST_EPOCH_C1));
            let stats = run_until_convergence(
                &mut state,
                ds,
                MarginRule::Dynamic { epsilon: eps },
                &opts,
                watch,
                |ev| ins.on(ev),
            )?;
            (stats.epochs, Vec::new(), stats.max_norm_drift)
        }
        Algorithm::PdmSucc => {
            let target = cfg.epsilon.expect("validated");
            let mut stages = Vec::new();
            let mut epochs = 0;
            let mut drift: f64 = 0.0;
            for eps in stage_schedule(target, cfg.eta) {
                let mut opts = schedule_options(cfg, multiple(MultipleUpdates::Always), None);
                opts.epoch_offset = epochs;
                opts.max_epochs = cfg.max_epochs.saturating_sub(epochs).max(1);
                let stats = run_until_convergence(
                    &mut state,
                    ds,
                    MarginRule::Dynamic { epsilon: eps },
                    &opts,
                    watch,
                    |ev| ins.on(ev),
                )
                .map_err(|e| match e {
                    ScheduleError::NotConverged { epochs: e2, .. } => TrainError::NotConverged {
                        epochs: epochs + e2,
                        updates: state.t(),
                    },
                    other => other.into(),
                })?;
                epochs += stats.epochs;
                drift = drift.max(stats.max_norm_drift);
                stages.push(Stage {
                    epsilon: eps,
                    t_c: state.t(),
                    epochs: stats.epochs,
                    norm_a: state.norm(),
                });
            }
            (epochs, stages, drift)
        }
        Algorithm::Pfm => {
            let beta = cfg.beta.expect("validated");
            let opts = schedule_options(cfg, multiple(MultipleUpdates::Always), None);
            let stats = run_until_convergence(
                &mut state,
                ds,
                MarginRule::Fixed { beta },
                &opts,
                watch,
                |ev| ins.on(ev),
            )?;
            (stats.epochs, Vec::new(), stats.max_norm_drift)
        }
    };
    let eq6 = cfg.instrument_eq6.then_some(ins.worst);
    finish(cfg, ds, state, epochs, stages, eq6, drift, start.elapsed())
}

pub fn train(ds: &WorkingDataset, cfg: &RunConfig) -> Result<Trained, TrainError> {
    train_observed(ds, cfg, false, |_| {})
}

pub fn train_pdm(ds: &WorkingDataset, epsilon: f64, cfg: &RunConfig) -> Result<Trained, TrainError> {
    let cfg = RunConfig {
        algorithm: Algorithm::Pdm,
        epsilon: Some(epsilon),
        beta: None,
        ..*cfg
    };
    train(ds, &cfg)
}

pub fn train_pdm_succ(ds: &WorkingDataset, epsilon: f64, eta: f64, cfg: &RunConfig) -> Result<Trained, TrainError> {
    let cfg = RunConfig {
        algorithm: Algorithm::PdmSucc,
        epsilon: Some(epsilon),
        beta: None,
        eta,
        ..*cfg
    };
    train(ds, &cfg)
}

pub fn train_pfm(ds: &WorkingDataset, beta: f64, cfg: &RunConfig) -> Result<Trained, TrainError> {
    let cfg = RunConfig {
        algorithm: Algorithm::Pfm,
        epsilon: None,
        beta: Some(beta),
        ..*cfg
    };
    train(ds, &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Plain,
    Succ,
}

/// A dynamic-margin run followed by a fixed-margin run with `β` set to the
/// margin the first one achieved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub dynamic: Trained,
    pub fixed: Trained,
}

impl Experiment {
    /// `t_c(dynamic) / t_c(fixed)`.
    pub fn update_ratio(&self) -> f64 {
        self.dynamic.report.t_c as f64 / self.fixed.report.t_c as f64
    }
}

pub fn experiment_pdm_vs_pfm(
    ds: &WorkingDataset,
    epsilon: f64,
    variant: Variant,
    cfg: &RunConfig,
) -> Result<Experiment, TrainError> {
    let dynamic = match variant {
        Variant::Plain => train_pdm(ds, epsilon, cfg)?,
        Variant::Succ => train_pdm_succ(ds, epsilon, cfg.eta, cfg)?,
    };
    let fixed = train_pfm(ds, dynamic.report.gamma_prime_d, cfg)?;
    Ok(Experiment { dynamic, fixed })
}
