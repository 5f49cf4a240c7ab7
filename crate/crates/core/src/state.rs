//! Weight vector state, misclassification conditions and perceptron updates.
//!
//! The weight vector `a_t` lives in the extended space. Its explicit part is
//! stored densely; its extension part is `Δ · Σ_k c_k l_k e_k`, fully
//! described by the per-pattern update counts `c_k`. Because pattern `k`'s
//! extension coordinate is `l_k Δ e_k`, the labels cancel and
//! `a_t · y_k = w · ȳ_k + c_k Δ²`.

use thiserror::Error;

use crate::data::WorkingDataset;

/// Largest multiplicity accepted for a single multiple update.
pub const MAX_LAMBDA: u64 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("multiple update of {lambda} steps on pattern {k} exceeds 2^32")]
    LambdaOverflow { k: usize, lambda: f64 },
    #[error("multiple-update quadratic has no admissible root for pattern {k}")]
    NoRoot { k: usize },
    #[error("margin of a zero weight vector is undefined")]
    ZeroWeights,
}

/// The update test applied to a presented pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginRule {
    /// `a·y ≤ (1-ε)‖a‖²/t`, threshold 0 at `t = 0`.
    Dynamic { epsilon: f64 },
    /// `a·y ≤ β‖a‖`.
    Fixed { beta: f64 },
}

impl MarginRule {
    /// `Θ` such that pattern `k` triggers an update iff `a·y_k ≤ Θ`.
    #[inline]
    pub fn threshold(&self, state: &WeightState) -> f64 {
        match *self {
            MarginRule::Dynamic { epsilon } => {
                if state.t == 0 {
                    0.0
                } else {
                    (1.0 - epsilon) * state.norm_sq / state.t as f64
                }
            }
            MarginRule::Fixed { beta } => beta * state.norm_sq.max(0.0).sqrt(),
        }
    }

    #[inline]
    pub fn violates(&self, state: &WeightState, dot: f64) -> bool {
        dot <= self.threshold(state)
    }

    /// Closed-form multiplicity for a pattern that currently satisfies the
    /// condition. `dot` is `a·y_k` at the current state.
    pub fn update_count(
        &self,
        state: &WeightState,
        ds: &WorkingDataset,
        k: usize,
        dot: f64,
    ) -> Result<u64, StateError> {
        match *self {
            MarginRule::Dynamic { epsilon } => {
                if state.t == 0 {
                    return Ok(1);
                }
                dynamic_count(state.t, state.norm_sq, dot, ds.sq_norm(k), epsilon, k)
            }
            MarginRule::Fixed { beta } => fixed_count(state.norm_sq, dot, ds.sq_norm(k), beta, k),
        }
    }
}

/// Explicit weights, per-pattern counts, cached `‖a‖²` and update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    w: Vec<f64>,
    counts: Vec<u64>,
    norm_sq: f64,
    t: u64,
    delta_sq: f64,
}

impl WeightState {
    /// `a_0 = 0`.
    pub fn new(ds: &WorkingDataset) -> Self {
        Self {
            w: vec![0.0; ds.explicit_dim()],
            counts: vec![0; ds.len()],
            norm_sq: 0.0,
            t: 0,
            delta_sq: ds.delta() * ds.delta(),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Cached `‖a_t‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.max(0.0).sqrt()
    }

    pub fn explicit_weights(&self) -> &[f64] {
        &self.w
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `a_t · y_k = w·ȳ_k + c_k Δ²`.
    #[inline]
    pub fn dot(&self, ds: &WorkingDataset, k: usize) -> f64 {
        ds.dot_explicit(&self.w, k) + self.counts[k] as f64 * self.delta_sq
    }

    /// Whether pattern `k` violates the dynamic condition (threshold 0 at `t = 0`).
    pub fn dynamic_condition(&self, ds: &WorkingDataset, k: usize, epsilon: f64) -> bool {
        MarginRule::Dynamic { epsilon }.violates(self, self.dot(ds, k))
    }

    pub fn fixed_condition(&self, ds: &WorkingDataset, k: usize, beta: f64) -> bool {
        MarginRule::Fixed { beta }.violates(self, self.dot(ds, k))
    }

    /// `a ← a + y_k`.
    pub fn single_update(&mut self, ds: &WorkingDataset, k: usize) {
        let dot = self.dot(ds, k);
        self.apply_with_dot(ds, k, 1, dot);
    }

    /// `a ← a + λ y_k`, equivalent to `λ` single updates.
    pub fn apply_multiple(&mut self, ds: &WorkingDataset, k: usize, lambda: u64) {
        assert!(lambda >= 1, "apply_multiple needs lambda >= 1");
        let dot = self.dot(ds, k);
        self.apply_with_dot(ds, k, lambda, dot);
    }

    /// Same as [`apply_multiple`](Self::apply_multiple) with `a·y_k` already
    /// known.
    #[inline]
    pub(crate) fn apply_with_dot(&mut self, ds: &WorkingDataset, k: usize, lambda: u64, dot: f64) {
        let l = lambda as f64;
        if lambda == 1 {
            ds.axpy_explicit(1.0, k, &mut self.w);
        } else {
            ds.axpy_explicit_fused(l, k, &mut self.w);
        }
        self.counts[k] += lambda;
        self.norm_sq += 2.0 * l * dot + l * l * ds.sq_norm(k);
        self.t += lambda;
    }

    /// `‖w‖² + Δ² Σ c_k²`, computed from scratch.
    pub fn recompute_norm_sq(&self) -> f64 {
        let explicit: f64 = self.w.iter().map(|v| v * v).sum();
        let virt: f64 = self
            .counts
            .iter()
            .map(|&c| {
                let c = c as f64;
                c * c
            })
            .sum();
        explicit + self.delta_sq * virt
    }

    /// Replaces the cached norm with a full recomputation and returns the
    /// absolute drift that was removed.
    pub fn refresh_norm(&mut self) -> f64 {
        let fresh = self.recompute_norm_sq();
        let drift = (fresh - self.norm_sq).abs();
        self.norm_sq = fresh;
        drift
    }

    /// Achieved directional margin `min_k a·y_k / ‖a‖`; ties go to the lowest
    /// index.
    pub fn evaluate_margin(&self, ds: &WorkingDataset) -> Result<MarginReport, StateError> {
        if self.t == 0 || self.norm_sq <= 0.0 {
            return Err(StateError::ZeroWeights);
        }
        let norm = self.norm();
        let mut best = (f64::INFINITY, 0);
        for k in 0..ds.len() {
            let d = self.dot(ds, k);
            if d < best.0 {
                best = (d, k);
            }
        }
        Ok(MarginReport {
            gamma_prime_d: best.0 / norm,
            argmin: best.1,
        })
    }

    /// Test-and-inspection constructor. Counts must be consistent with `w`
    /// for the state to be reachable; `norm_sq` and `t` are derived.
    pub fn from_parts(ds: &WorkingDataset, w: Vec<f64>, counts: Vec<u64>) -> Self {
        assert_eq!(w.len(), ds.explicit_dim());
        assert_eq!(counts.len(), ds.len());
        let mut s = Self {
            w,
            counts,
            norm_sq: 0.0,
            t: 0,
            delta_sq: ds.delta() * ds.delta(),
        };
        s.t = s.counts.iter().sum();
        s.norm_sq = s.recompute_norm_sq();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    pub gamma_prime_d: f64,
    pub argmin: usize,
}

/// Condition after `lambda` more updates of a pattern, from the closed forms
/// `a'·y = p + λq` and `‖a'‖² = N + 2λp + λ²q`.
fn dynamic_holds_after(t: u64, n: f64, p: f64, q: f64, epsilon: f64, lambda: f64) -> bool {
    let p2 = p + lambda * q;
    let n2 = n + 2.0 * lambda * p + lambda * lambda * q;
    p2 <= (1.0 - epsilon) * n2 / (t as f64 + lambda)
}

fn fixed_holds_after(n: f64, p: f64, q: f64, beta: f64, lambda: f64) -> bool {
    let p2 = p + lambda * q;
    let n2 = n + 2.0 * lambda * p + lambda * lambda * q;
    p2 <= beta * n2.max(0.0).sqrt()
}

/// Moves `lambda` so that the condition holds after `lambda - 1` updates and
/// fails after `lambda`. The root is usually exact; this only absorbs
/// rounding right at an integer boundary.
fn settle(mut lambda: f64, holds: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..64 {
        if lambda > 1.0 && !holds(lambda - 1.0) {
            lambda -= 1.0;
        } else if holds(lambda) {
            lambda += 1.0;
        } else {
            break;
        }
    }
    lambda
}

fn to_count(lambda: f64, k: usize) -> Result<u64, StateError> {
    if !lambda.is_finite() || lambda > MAX_LAMBDA as f64 {
        return Err(StateError::LambdaOverflow { k, lambda });
    }
    Ok(lambda.max(1.0) as u64)
}

/// `λ = ⌊μ₊⌋ + 1` with `μ₊` the nonnegative root of
/// `(t+μ)(p + μq) = (1-ε)(N + 2μp + μ²q)`, i.e.
/// `εq μ² + (tq + (2ε-1)p) μ + (tp - (1-ε)N) = 0`.
pub(crate) fn dynamic_count(
    t: u64,
    n: f64,
    p: f64,
    q: f64,
    epsilon: f64,
    k: usize,
) -> Result<u64, StateError> {
    let tf = t as f64;
    let a = epsilon * q;
    let b = tf * q + (2.0 * epsilon - 1.0) * p;
    let c = tf * p - (1.0 - epsilon) * n;
    // c <= 0 whenever the condition holds; clamp rounding noise
    let c = c.min(0.0);
    let disc = b * b - 4.0 * a * c;
    if !(a > 0.0) || !(disc >= 0.0) {
        return Err(StateError::NoRoot { k });
    }
    let sq = disc.sqrt();
    let mu = if b > 0.0 {
        -2.0 * c / (b + sq)
    } else {
        (sq - b) / (2.0 * a)
    };
    if !mu.is_finite() {
        return Err(StateError::LambdaOverflow { k, lambda: mu });
    }
    let lambda = mu.max(0.0).floor() + 1.0;
    if lambda > MAX_LAMBDA as f64 {
        return Err(StateError::LambdaOverflow { k, lambda });
    }
    let lambda = settle(lambda, |l| dynamic_holds_after(t, n, p, q, epsilon, l));
    to_count(lambda, k)
}

/// Fixed-rule analogue. Squaring `p + μq = β√(N + 2μp + μ²q)` gives
/// `q(q-β²) μ² + 2p(q-β²) μ + (p² - β²N) = 0`; the admissible crossing is
/// the larger root, and only if `p + μq ≥ 0` there. When `β ≥ ‖y_k‖` the
/// pattern can never be pushed past the threshold by itself and `λ = 1`.
pub(crate) fn fixed_count(n: f64, p: f64, q: f64, beta: f64, k: usize) -> Result<u64, StateError> {
    let s = q - beta * beta;
    if !(s > 0.0) {
        return Ok(1);
    }
    // q μ² + 2p μ + (p² - β²N)/s = 0
    let c = (p * p - beta * beta * n) / s;
    let disc = p * p - q * c;
    if !(disc >= 0.0) {
        return Ok(1);
    }
    let sq = disc.sqrt();
    // larger root, written to avoid cancellation when p > 0
    let mu = if p < 0.0 {
        (sq - p) / q
    } else if sq + p > 0.0 {
        -c / (sq + p)
    } else {
        0.0
    };
    if !mu.is_finite() {
        return Err(StateError::LambdaOverflow { k, lambda: mu });
    }
    if p + mu * q < 0.0 {
        return Ok(1);
    }
    let lambda = mu.max(0.0).floor() + 1.0;
    if lambda > MAX_LAMBDA as f64 {
        return Err(StateError::LambdaOverflow { k, lambda });
    }
    let lambda = settle(lambda, |l| fixed_holds_after(n, p, q, beta, l));
    to_count(lambda, k)
}

/// Dynamic-rule multiplicity for pattern `k`. Requires `t ≥ 1` and the
/// condition to hold.
pub fn multiple_update_count_dynamic(
    state: &WeightState,
    ds: &WorkingDataset,
    k: usize,
    epsilon: f64,
) -> Result<u64, StateError> {
    assert!(state.t >= 1, "dynamic multiple update needs t >= 1");
    MarginRule::Dynamic { epsilon }.update_count(state, ds, k, state.dot(ds, k))
}

pub fn multiple_update_count_fixed(
    state: &WeightState,
    ds: &WorkingDataset,
    k: usize,
    beta: f64,
) -> Result<u64, StateError> {
    MarginRule::Fixed { beta }.update_count(state, ds, k, state.dot(ds, k))
}

/// Difference of the two sides of the consecutive-ratio identity
///
/// `N_t/t² - N_{t+1}/(t+1)² = [(N_t/t - a_t·y) + (N_{t+1}/(t+1) - a_{t+1}·y)] / (t(t+1))`
///
/// from scalar ingredients. Returns `(lhs - rhs, lhs)`.
pub fn eq6_parts(t: u64, norm_before: f64, dot_before: f64, norm_after: f64, dot_after: f64) -> (f64, f64) {
    let t = t as f64;
    let t1 = t + 1.0;
    let lhs = norm_before / (t * t) - norm_after / (t1 * t1);
    let rhs = ((norm_before / t - dot_before) + (norm_after / t1 - dot_after)) / (t * t1);
    (lhs - rhs, lhs)
}

/// Residual of the consecutive-ratio identity across one single update on
/// pattern `k`.
pub fn eq6_residual(before: &WeightState, after: &WeightState, ds: &WorkingDataset, k: usize) -> f64 {
    assert!(before.t > 0 && after.t == before.t + 1);
    eq6_parts(
        before.t,
        before.norm_sq,
        before.dot(ds, k),
        after.norm_sq,
        after.dot(ds, k),
    )
    .0
}
