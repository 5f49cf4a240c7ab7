//! Pattern presentation: permuted full-dataset epochs with three nested
//! active sets, or plain cyclic passes.
//!
//! A full epoch presents every pattern (in a fresh permutation) and collects
//! the level-1 set `{k : a·y_k ≤ c1 Θ}`, where `Θ` is the rule's current
//! threshold. Each of up to `n_ep1` level-1 rounds passes over that set,
//! collecting level 2 with `c2`; each of up to `n_ep2` level-2 rounds
//! collects level 3 with multiplier 1 and replays it for up to `n_ep3`
//! mini-epochs. A round that performs no update ends its level early.
//! Training stops after a full epoch without updates.
//!
//! Membership multipliers only choose which patterns are presented; every
//! update is still gated by the rule's own condition at that moment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::WorkingDataset;
use crate::state::{eq6_parts, MarginRule, StateError, WeightState};

pub const DEFAULT_MAX_EPOCHS: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("no convergence after {epochs} full epochs ({updates} updates)")]
    NotConverged { epochs: u64, updates: u64 },
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid active-set configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSetConfig {
    pub c1: f64,
    pub c2: f64,
    pub n_ep1: u32,
    pub n_ep2: u32,
    pub n_ep3: u32,
    pub seed: u64,
}

impl Default for ActiveSetConfig {
    fn default() -> Self {
        Self {
            c1: 2.2,
            c2: 1.1,
            n_ep1: 9,
            n_ep2: 12,
            n_ep3: 12,
            seed: 0,
        }
    }
}

impl ActiveSetConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.c1 >= self.c2 && self.c2 >= 1.0) {
            return Err(ScheduleError::Config(format!(
                "need c1 >= c2 >= 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.n_ep1 == 0 || self.n_ep2 == 0 || self.n_ep3 == 0 {
            return Err(ScheduleError::Config("round counts must be positive".into()));
        }
        Ok(())
    }
}

/// How patterns are presented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Presentation {
    ActiveSets(ActiveSetConfig),
    /// Full-dataset passes only; `seed: None` keeps the natural order.
    Cyclic { seed: Option<u64> },
}

impl Default for Presentation {
    fn default() -> Self {
        Presentation::ActiveSets(ActiveSetConfig::default())
    }
}

/// When closed-form multiple updates are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultipleUpdates {
    Off,
    Always,
    /// Single updates during the first full epoch, multiple afterwards.
    AfterFirstEpoch,
}

/// Per-run schedule options beyond the presentation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleOptions {
    pub presentation: Presentation,
    pub multiple: MultipleUpdates,
    /// Overrides `c1` while the very first full epoch of the run builds its
    /// level-1 set.
    pub first_epoch_c1: Option<f64>,
    pub max_epochs: u64,
    /// Offset added to epoch indices when deriving permutations, so that
    /// consecutive runs sharing a seed do not repeat orders.
    pub epoch_offset: u64,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            presentation: Presentation::default(),
            multiple: MultipleUpdates::Always,
            first_epoch_c1: None,
            max_epochs: DEFAULT_MAX_EPOCHS,
            epoch_offset: 0,
        }
    }
}

/// One (possibly multiple) update as seen by an observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateEvent {
    pub k: usize,
    pub lambda: u64,
    pub t_before: u64,
    pub norm_sq_before: f64,
    pub dot_before: f64,
    /// Threshold in force when the update was decided.
    pub threshold: f64,
    pub norm_sq_after: f64,
    /// `a·y_k` recomputed from the updated state.
    pub dot_after: f64,
    /// `‖y_k‖²`.
    pub sq_norm: f64,
}

impl UpdateEvent {
    /// Largest relative residual of the consecutive-ratio identity over the
    /// `lambda` single steps this event stands for. Intermediate steps of a
    /// multiple update use the closed forms; the last step uses the
    /// recomputed `dot_after`.
    pub fn eq6_max_relative_residual(&self) -> f64 {
        let (p, q, n) = (self.dot_before, self.sq_norm, self.norm_sq_before);
        let mut worst: f64 = 0.0;
        if self.t_before == 0 {
            return 0.0;
        }
        for j in 0..self.lambda {
            let jf = j as f64;
            let nb = n + 2.0 * jf * p + jf * jf * q;
            let pb = p + jf * q;
            let (na, pa) = if j + 1 == self.lambda {
                (self.norm_sq_after, self.dot_after)
            } else {
                let j1 = jf + 1.0;
                (n + 2.0 * j1 * p + j1 * j1 * q, p + j1 * q)
            };
            let (res, lhs) = eq6_parts(self.t_before + j, nb, pb, na, pa);
            worst = worst.max(res.abs() / lhs.abs().max(1.0));
        }
        worst
    }
}

/// Summary of one call to [`run_until_convergence`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub epochs: u64,
    pub updates: u64,
    /// Largest relative drift removed by the per-epoch norm refresh.
    pub max_norm_drift: f64,
}

/// Deterministic permutation of `0..m` for `(seed, epoch)`.
///
/// ChaCha8 seeded with `seed` on stream `epoch`, then the Fisher-Yates
/// shuffle of `rand::seq::SliceRandom`. Both are value-stable across
/// platforms.
pub fn permute(m: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    perm
}

struct Runner<'a, F> {
    ds: &'a WorkingDataset,
    state: &'a mut WeightState,
    rule: MarginRule,
    multiple_now: bool,
    observer: F,
    instrument: bool,
    updates: u64,
}

impl<F: FnMut(&UpdateEvent)> Runner<'_, F> {
    /// Presents pattern `k`. Returns whether it was updated and whether it
    /// belongs to the next active set (`a·y_k ≤ mult·Θ`, before the update).
    #[inline]
    fn present(&mut self, k: usize, mult: f64) -> Result<(bool, bool), StateError> {
        let dot = self.state.dot(self.ds, k);
        let theta = self.rule.threshold(self.state);
        let member = dot <= mult * theta;
        if dot > theta {
            return Ok((false, member));
        }
        let lambda = if self.multiple_now {
            self.rule.update_count(self.state, self.ds, k, dot)?
        } else {
            1
        };
        let t_before = self.state.t();
        let norm_before = self.state.norm_sq();
        self.state.apply_with_dot(self.ds, k, lambda, dot);
        self.updates += lambda;
        if self.instrument {
            let ev = UpdateEvent {
                k,
                lambda,
                t_before,
                norm_sq_before: norm_before,
                dot_before: dot,
                threshold: theta,
                norm_sq_after: self.state.norm_sq(),
                dot_after: self.state.dot(self.ds, k),
                sq_norm: self.ds.sq_norm(k),
            };
            (self.observer)(&ev);
        }
        Ok((true, member))
    }

    /// One pass over `set`; returns the number of updated presentations and
    /// the members of the next level.
    fn pass(&mut self, set: &[usize], mult: f64, collect: bool) -> Result<(u64, Vec<usize>), StateError> {
        let mut hits = 0;
        let mut next = Vec::new();
        for &k in set {
            let (updated, member) = self.present(k, mult)?;
            hits += updated as u64;
            if collect && member {
                next.push(k);
            }
        }
        Ok((hits, next))
    }

    fn level3(&mut self, set: &[usize], n_ep3: u32) -> Result<u64, StateError> {
        let mut total = 0;
        for _ in 0..n_ep3 {
            if set.is_empty() {
                break;
            }
            let (hits, _) = self.pass(set, 1.0, false)?;
            total += hits;
            if hits == 0 {
                break;
            }
        }
        Ok(total)
    }

    fn level2(&mut self, set: &[usize], cfg: &ActiveSetConfig) -> Result<u64, StateError> {
        let mut total = 0;
        for _ in 0..cfg.n_ep2 {
            if set.is_empty() {
                break;
            }
            let (hits, l3) = self.pass(set, 1.0, true)?;
            let nested = self.level3(&l3, cfg.n_ep3)?;
            total += hits + nested;
            if hits + nested == 0 {
                break;
            }
        }
        Ok(total)
    }

    fn level1(&mut self, set: &[usize], cfg: &ActiveSetConfig) -> Result<u64, StateError> {
        let mut total = 0;
        for _ in 0..cfg.n_ep1 {
            if set.is_empty() {
                break;
            }
            let (hits, l2) = self.pass(set, cfg.c2, true)?;
            let nested = self.level2(&l2, cfg)?;
            total += hits + nested;
            if hits + nested == 0 {
                break;
            }
        }
        Ok(total)
    }
}

/// Trains `state` under `rule` until a full epoch triggers no update.
///
/// `observer` is called after every update when `instrument` is set.
pub fn run_until_convergence<F: FnMut(&UpdateEvent)>(
    state: &mut WeightState,
    ds: &WorkingDataset,
    rule: MarginRule,
    opts: &ScheduleOptions,
    instrument: bool,
    observer: F,
) -> Result<RunStats, ScheduleError> {
    if let Presentation::ActiveSets(cfg) = &opts.presentation {
        cfg.validate()?;
    }
    let m = ds.len();
    let natural: Vec<usize> = (0..m).collect();
    let mut runner = Runner {
        ds,
        state,
        rule,
        multiple_now: opts.multiple == MultipleUpdates::Always,
        observer,
        instrument,
        updates: 0,
    };
    let mut stats = RunStats::default();

    for epoch in 0..opts.max_epochs {
        let cached = runner.state.norm_sq();
        let drift = runner.state.refresh_norm();
        if cached > 0.0 {
            stats.max_norm_drift = stats.max_norm_drift.max(drift / cached);
        }
        stats.epochs = epoch + 1;
        let key = epoch + opts.epoch_offset;

        match &opts.presentation {
            Presentation::Cyclic { seed } => {
                let order = match seed {
                    Some(s) => permute(m, *s, key),
                    None => natural.clone(),
                };
                let (hits, _) = runner.pass(&order, 1.0, false)?;
                if hits == 0 {
                    stats.updates = runner.updates;
                    return Ok(stats);
                }
            }
            Presentation::ActiveSets(cfg) => {
                let order = permute(m, cfg.seed, key);
                let c1 = match (epoch, opts.first_epoch_c1) {
                    (0, Some(c)) => c,
                    _ => cfg.c1,
                };
                let (hits, l1) = runner.pass(&order, c1, true)?;
                if hits == 0 {
                    stats.updates = runner.updates;
                    return Ok(stats);
                }
                if opts.multiple == MultipleUpdates::AfterFirstEpoch {
                    runner.multiple_now = true;
                }
                runner.level1(&l1, cfg)?;
            }
        }
        if opts.multiple == MultipleUpdates::AfterFirstEpoch {
            runner.multiple_now = true;
        }
    }
    Err(ScheduleError::NotConverged {
        epochs: opts.max_epochs,
        updates: runner.updates,
    })
}
