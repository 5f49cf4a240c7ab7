//! Closed-form convergence bounds and the after-run accuracy estimate.
//!
//! All functions take the pattern radius `R` and a maximum directional
//! margin `γ_d` (true or assumed) and return update-count bounds as reals.

use std::f64::consts::E;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("bound precondition violated: {0}")]
pub struct BoundError(pub String);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), BoundError> {
    if cond {
        Ok(())
    } else {
        Err(BoundError(msg()))
    }
}

/// `ε` values this close to 1/2 use the `ε = 1/2` formula.
pub const HALF_TOLERANCE: f64 = 1e-12;

/// Inputs shared by the bound calculators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub r: f64,
    pub gamma_d: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), BoundError> {
        check(self.epsilon > 0.0 && self.epsilon <= 1.0, || {
            format!("epsilon must be in (0, 1], got {}", self.epsilon)
        })?;
        check(self.gamma_d > 0.0 && self.r >= self.gamma_d, || {
            format!("need R >= gamma_d > 0, got R={} gamma_d={}", self.r, self.gamma_d)
        })
    }
}

/// A bound reported both before and after its refinement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateBound {
    pub loose: f64,
    pub tight: f64,
}

/// For `t ≥ e^{-C}` with `t < δ(1 + C + ln t)` and `δ ≥ e^{-C}`, returns
/// `t₀ = (1+e⁻¹) δ (C + ln((1+e) δ))`, an upper bound on `t`.
pub fn lemma1_t0(delta: f64, c: f64) -> Result<f64, BoundError> {
    check(delta >= (-c).exp(), || format!("need delta >= e^-C, got delta={delta} C={c}"))?;
    Ok((1.0 + 1.0 / E) * delta * (c + ((1.0 + E) * delta).ln()))
}

/// Update bound of the fixed-margin perceptron run with `β = (1-ε)γ_d`.
pub fn theorem1_bound(epsilon: f64, r: f64, gamma_d: f64) -> Result<f64, BoundError> {
    BoundInputs { epsilon, r, gamma_d }.validate()?;
    let g = gamma_d / r;
    let shrink = 1.0 - g * (1.0 - epsilon);
    let braces = 4.0 * g * shrink + ((1.0 + E) / epsilon * (r / gamma_d) * shrink).ln();
    Ok((1.0 + 1.0 / E) / (2.0 * epsilon) * (r * r) / (gamma_d * gamma_d) * braces)
}

/// Loose `t₀` of the `ε < 1/2` analysis for a run that has already made `n`
/// updates with `‖a_N‖ = α_N R N`:
///
/// `t₀ = N (α_N R/γ_d)^{1/ε} (1 + α_N⁻² N⁻¹ / (1-2ε))^{1/(2ε)}`.
pub fn warm_start_t0(epsilon: f64, n: f64, alpha_n: f64, r: f64, gamma_d: f64) -> Result<f64, BoundError> {
    check(epsilon > 0.0 && epsilon < 0.5, || format!("need 0 < epsilon < 1/2, got {epsilon}"))?;
    check(n >= 1.0, || format!("need N >= 1, got {n}"))?;
    check(alpha_n > 0.0, || format!("need alpha_N > 0, got {alpha_n}"))?;
    let base = alpha_n * r / gamma_d;
    let inner = 1.0 + 1.0 / (alpha_n * alpha_n * n) / (1.0 - 2.0 * epsilon);
    Ok(n * base.powf(1.0 / epsilon) * inner.powf(1.0 / (2.0 * epsilon)))
}

/// Update bound of the dynamic-margin perceptron, loose and tightened.
///
/// The two sides of `ε = 1/2` use different estimates; at `ε = 1/2` both
/// values coincide.
pub fn theorem2(epsilon: f64, r: f64, gamma_d: f64) -> Result<UpdateBound, BoundError> {
    BoundInputs { epsilon, r, gamma_d }.validate()?;
    let ratio_sq = (r / gamma_d).powi(2);
    if (epsilon - 0.5).abs() <= HALF_TOLERANCE {
        let b = (1.0 + 1.0 / E) * ratio_sq * ((1.0 + E) * ratio_sq).ln();
        return Ok(UpdateBound { loose: b, tight: b });
    }
    if epsilon < 0.5 {
        let n = (1.0 / epsilon).floor();
        let t0 = n
            * (r / gamma_d).powf(1.0 / epsilon)
            * (1.0 + (1.0 / n) / (1.0 - 2.0 * epsilon)).powf(1.0 / (2.0 * epsilon));
        let tight = t0 * (1.0 - ratio_sq / ((1.0 - 2.0 * epsilon) * t0)).powf(1.0 / (2.0 * epsilon));
        Ok(UpdateBound { loose: t0, tight })
    } else {
        let t0 = epsilon * (3.0 - 2.0 * epsilon) / (2.0 * epsilon - 1.0) * ratio_sq;
        let tight = t0 * (1.0 - 2.0 * (1.0 - epsilon) * t0.powf(1.0 - 2.0 * epsilon));
        Ok(UpdateBound { loose: t0, tight })
    }
}

/// The tightened dynamic-margin bound.
pub fn theorem2_bound(epsilon: f64, r: f64, gamma_d: f64) -> Result<f64, BoundError> {
    theorem2(epsilon, r, gamma_d).map(|b| b.tight)
}

/// `1 - γ'_d t_c / ‖a_{t_c}‖`, an upper bound on `(γ_d - γ'_d)/γ_d`.
pub fn after_run_estimate(gamma_prime_d: f64, t_c: u64, norm_a: f64) -> Result<f64, BoundError> {
    check(t_c > 0 && norm_a > 0.0, || format!("need t_c > 0 and |a| > 0, got {t_c}, {norm_a}"))?;
    check(gamma_prime_d > 0.0, || format!("need gamma'_d > 0, got {gamma_prime_d}"))?;
    let ub = norm_a / t_c as f64;
    // γ'_d ≤ ‖a‖/t holds exactly; allow rounding in the last bits
    check(gamma_prime_d <= ub * (1.0 + 1e-12), || {
        format!("gamma'_d = {gamma_prime_d} exceeds |a|/t = {ub}")
    })?;
    Ok((1.0 - gamma_prime_d / ub).max(0.0))
}

/// Bound on the cumulative update count after the next stage of successive
/// runs, given that the stage at `ε_n` converged after `t_cn` updates and
/// the next stage runs at `ε_n/η`.
pub fn succ_ratio_bound(epsilon_n: f64, eta: f64, t_cn: u64, r: f64, gamma_d: f64) -> Result<f64, BoundError> {
    check(epsilon_n > 0.0 && epsilon_n <= 0.5, || {
        format!("need 0 < epsilon_n <= 1/2, got {epsilon_n}")
    })?;
    check(eta > 1.0, || format!("need eta > 1, got {eta}"))?;
    check(t_cn >= 1, || "need t_cn >= 1".to_string())?;
    check(gamma_d > 0.0 && r >= gamma_d, || format!("need R >= gamma_d > 0, got R={r} gamma_d={gamma_d}"))?;
    let t = t_cn as f64;
    let head = (1.0 / (1.0 - epsilon_n)).powf(eta / epsilon_n);
    let inner = 1.0
        + (1.0 - epsilon_n).powi(2) / (1.0 - 2.0 * epsilon_n / eta) * (r / gamma_d).powi(2) / t;
    Ok(t * head * inner.powf(eta / (2.0 * epsilon_n)))
}
