//! Reference computation of the maximum directional margin.
//!
//! `γ_d` equals the distance from the origin to the convex hull of the
//! working patterns. The solver keeps a point `p = Σ λ_k y_k` of the hull and
//! moves it with exact line searches, either toward the pattern minimizing
//! `p·y_k` (Gilbert step) or away from the support pattern maximizing it
//! (away step). Every iterate brackets the answer:
//! `min_k p·y_k / ‖p‖ ≤ γ_d ≤ ‖p‖`.
//!
//! Inner products use the same implicit extension as training: `p`'s
//! extension part is `Δ Σ λ_k l_k e_k`, so `p·y_k = w_p·ȳ_k + λ_k Δ²`.

use thiserror::Error;

use crate::data::WorkingDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no convergence in {iterations} iterations; gamma_d in [{lower}, {upper}]")]
    MaxIter {
        iterations: u64,
        lower: f64,
        upper: f64,
    },
    #[error("patterns are not separable through the origin (hull contains 0)")]
    NotSeparable,
    #[error("invalid oracle parameter: {0}")]
    Param(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// `‖p‖` at termination, the upper end of the bracket.
    pub gamma_d: f64,
    /// `min_k p·y_k / ‖p‖`, the lower end.
    pub lower: f64,
    /// Convex-combination weights over patterns.
    pub certificate: Vec<f64>,
    pub iterations: u64,
    /// Final bracket width `gamma_d - lower`.
    pub gap: f64,
}

impl OracleResult {
    /// Unit direction attaining at least `lower` on every pattern, as the
    /// explicit part of `p/‖p‖`.
    pub fn explicit_direction(&self, ds: &WorkingDataset) -> Vec<f64> {
        let mut w = vec![0.0; ds.explicit_dim()];
        for (k, &l) in self.certificate.iter().enumerate() {
            if l > 0.0 {
                ds.axpy_explicit(l, k, &mut w);
            }
        }
        let n = self.gamma_d;
        w.iter_mut().for_each(|v| *v /= n);
        w
    }
}

/// `‖Σ λ_k y_k‖` recomputed from scratch.
pub fn combination_norm(ds: &WorkingDataset, coeffs: &[f64]) -> f64 {
    let mut w = vec![0.0; ds.explicit_dim()];
    let mut virt = 0.0;
    for (k, &l) in coeffs.iter().enumerate() {
        if l != 0.0 {
            ds.axpy_explicit(l, k, &mut w);
            virt += l * l;
        }
    }
    let explicit: f64 = w.iter().map(|v| v * v).sum();
    (explicit + ds.delta() * ds.delta() * virt).sqrt()
}

struct HullPoint {
    w: Vec<f64>,
    coeffs: Vec<f64>,
    /// `p·y_k` for every pattern.
    dots: Vec<f64>,
    norm_sq: f64,
}

impl HullPoint {
    fn vertex(ds: &WorkingDataset, k: usize) -> Self {
        let mut p = HullPoint {
            w: vec![0.0; ds.explicit_dim()],
            coeffs: vec![0.0; ds.len()],
            dots: vec![0.0; ds.len()],
            norm_sq: 0.0,
        };
        p.coeffs[k] = 1.0;
        ds.axpy_explicit(1.0, k, &mut p.w);
        p.refresh(ds);
        p
    }

    fn refresh(&mut self, ds: &WorkingDataset) {
        let d2 = ds.delta() * ds.delta();
        for k in 0..ds.len() {
            self.dots[k] = ds.dot_explicit(&self.w, k) + self.coeffs[k] * d2;
        }
        let explicit: f64 = self.w.iter().map(|v| v * v).sum();
        let virt: f64 = self.coeffs.iter().map(|c| c * c).sum();
        self.norm_sq = explicit + d2 * virt;
    }

    /// `p ← (1-γ)p + γ y_k` (negative `γ` moves away from `y_k`).
    fn step(&mut self, ds: &WorkingDataset, k: usize, gamma: f64) {
        self.w.iter_mut().for_each(|v| *v *= 1.0 - gamma);
        ds.axpy_explicit(gamma, k, &mut self.w);
        self.coeffs.iter_mut().for_each(|c| *c *= 1.0 - gamma);
        self.coeffs[k] += gamma;
        if self.coeffs[k] < 0.0 {
            self.coeffs[k] = 0.0;
        }
    }
}

/// Distance from the origin to the hull of the working patterns, to within
/// `tol` (bracket width).
pub fn gilbert_gamma_d(ds: &WorkingDataset, tol: f64, max_iter: u64) -> Result<OracleResult, OracleError> {
    if !(tol > 0.0) {
        return Err(OracleError::Param(format!("tol must be > 0, got {tol}")));
    }
    let m = ds.len();
    // start at the shortest pattern
    let start = (0..m)
        .min_by(|&a, &b| ds.sq_norm(a).total_cmp(&ds.sq_norm(b)))
        .expect("dataset is non-empty");
    let mut p = HullPoint::vertex(ds, start);

    let mut iter = 0;
    loop {
        let norm = p.norm_sq.sqrt();
        let (s, min_dot) = p
            .dots
            .iter()
            .enumerate()
            .map(|(k, &d)| (k, d))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if min_dot <= 0.0 && norm <= tol {
            return Err(OracleError::NotSeparable);
        }
        let lower = if norm > 0.0 { min_dot / norm } else { 0.0 };
        let gap = norm - lower;
        if gap <= tol {
            return Ok(OracleResult {
                gamma_d: norm,
                lower,
                certificate: p.coeffs,
                iterations: iter,
                gap,
            });
        }
        if iter >= max_iter {
            if min_dot <= 0.0 {
                return Err(OracleError::NotSeparable);
            }
            return Err(OracleError::MaxIter {
                iterations: iter,
                lower,
                upper: norm,
            });
        }
        iter += 1;

        // away vertex: support pattern with the largest p·y_k
        let (v, max_dot) = p
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(k, _)| (k, p.dots[k]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let fw_gap = p.norm_sq - min_dot;
        let away_gap = max_dot - p.norm_sq;

        if fw_gap >= away_gap {
            // d = y_s - p; ‖d‖² = ‖y_s‖² - 2p·y_s + ‖p‖²
            let dd = ds.sq_norm(s) - 2.0 * min_dot + p.norm_sq;
            if dd <= 0.0 {
                break;
            }
            let gamma = (fw_gap / dd).clamp(0.0, 1.0);
            p.step(ds, s, gamma);
        } else {
            let cv = p.coeffs[v];
            let max_step = if cv >= 1.0 { f64::INFINITY } else { cv / (1.0 - cv) };
            let dd = ds.sq_norm(v) - 2.0 * max_dot + p.norm_sq;
            if dd <= 0.0 {
                break;
            }
            let gamma = (away_gap / dd).min(max_step);
            if !gamma.is_finite() {
                break;
            }
            // moving away: p ← (1+γ)p - γ y_v
            p.step(ds, v, -gamma);
            if gamma >= max_step {
                p.coeffs[v] = 0.0;
            }
        }
        // renormalize the weights so they keep summing to one
        let total: f64 = p.coeffs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            p.coeffs.iter_mut().for_each(|c| *c /= total);
            p.w = vec![0.0; ds.explicit_dim()];
            for k in 0..m {
                if p.coeffs[k] > 0.0 {
                    ds.axpy_explicit(p.coeffs[k], k, &mut p.w);
                }
            }
        }
        p.refresh(ds);
    }
    let norm = p.norm_sq.sqrt();
    let min_dot = p.dots.iter().cloned().fold(f64::INFINITY, f64::min);
    Err(OracleError::MaxIter {
        iterations: iter,
        lower: min_dot / norm,
        upper: norm,
    })
}

/// Outcome of checking a training run against the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichVerdict {
    pub pass: bool,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// After-run estimate bounds the true relative gap.
    pub estimate_ok: bool,
    pub failures: Vec<String>,
}

/// Checks `(1-ε)(γ_d - tol) ≤ γ'_d ≤ γ_d + tol` and that the after-run
/// estimate is at least the relative gap `(γ_d - γ'_d)/γ_d` (within `tol`).
pub fn verify_sandwich(
    gamma_prime_d: f64,
    after_run_estimate: Option<f64>,
    oracle: &OracleResult,
    epsilon: f64,
    tol: f64,
) -> SandwichVerdict {
    let g = oracle.gamma_d;
    let mut failures = Vec::new();
    let lower_ok = (1.0 - epsilon) * (g - tol) <= gamma_prime_d;
    if !lower_ok {
        failures.push(format!(
            "lower bound violated: gamma'_d = {gamma_prime_d} < (1-eps)(gamma_d - tol) = {}",
            (1.0 - epsilon) * (g - tol)
        ));
    }
    let upper_ok = gamma_prime_d <= g + tol;
    if !upper_ok {
        failures.push(format!(
            "upper bound violated: gamma'_d = {gamma_prime_d} > gamma_d + tol = {}",
            g + tol
        ));
    }
    let estimate_ok = match after_run_estimate {
        Some(est) => {
            // the true γ_d is at least the oracle's lower end
            let rel_gap = (oracle.lower - gamma_prime_d) / oracle.lower;
            let ok = rel_gap <= est + tol / oracle.lower;
            if !ok {
                failures.push(format!(
                    "after-run estimate {est} below relative gap {rel_gap}"
                ));
            }
            ok
        }
        None => true,
    };
    SandwichVerdict {
        pass: failures.is_empty(),
        lower_ok,
        upper_ok,
        estimate_ok,
        failures,
    }
}
