//! Regimes with uniformly subsampled batches: merely convex, strongly convex
//! and non-uniform stepsizes. All three split the noise as
//! `σ² = σ₁² + σ₂²`, charging `σ₂` to subsampling and `σ₁` to the shift.

use super::search::{integer_minimizer, minimize_split};
use super::{AccountResult, Accountant, Branch, InnerSolution, Setup};
use crate::error::{PrivacyError, Result};

fn constant_eta(s: &Setup) -> Result<f64> {
    s.eta
        .ok_or_else(|| PrivacyError::domain("this regime requires a constant stepsize"))
}

/// Per-step divergence with noise scale `sigma` in units of the sensitivity.
fn step_divergence(acc: &Accountant, s: &Setup, sigma: f64) -> Result<f64> {
    acc.sgm(s.q, s.b as f64 * sigma / s.sensitivity, s.alpha)
}

fn linear(acc: &Accountant, s: &Setup, formula: &str) -> Result<AccountResult> {
    let eps = s.iterations as f64 * step_divergence(acc, s, s.sigma)?;
    Ok(AccountResult {
        epsilon: eps,
        branch: Branch::TLinear,
        inner_solution: InnerSolution::default(),
        formula_id: formula.to_string(),
        linear_epsilon: eps,
    })
}

#[derive(Debug, Clone, Copy)]
struct Window {
    sigma2: f64,
    t_tilde: usize,
    tau: usize,
}

fn finish(mut base: AccountResult, value: f64, sigma1: f64, w: Window) -> AccountResult {
    if value < base.epsilon {
        base.epsilon = value;
        base.branch = Branch::Plateau;
        base.inner_solution = InnerSolution {
            sigma1: Some(sigma1),
            sigma2: Some(w.sigma2),
            t_tilde: Some(w.t_tilde),
            tau: Some(w.tau),
        };
    }
    base
}

fn sigma2_of(sigma: f64, sigma1: f64) -> f64 {
    ((sigma - sigma1) * (sigma + sigma1)).sqrt()
}

/// Merely convex losses: minimize `T̃·Q + αD²/(2η²σ₁²T̃)` over `σ₁` and
/// `T̃ ∈ [1, T−1]`, where `Q` is the per-step divergence at `σ₂`.
pub(crate) fn noisy_sgd(acc: &Accountant, s: &Setup) -> Result<AccountResult> {
    const ID: &str = "noisy_sgd_split_noise";
    let eta = constant_eta(s)?;
    let base = linear(acc, s, ID)?;
    let (Some(d), true) = (s.diameter, s.iterations >= 2) else {
        return Ok(base);
    };
    let t = s.iterations;
    let shift_cost = s.alpha * d * d / (2.0 * eta * eta);
    let best = minimize_split(s.sigma, |sigma1| {
        let sigma2 = sigma2_of(s.sigma, sigma1);
        let q = step_divergence(acc, s, sigma2)?;
        let k = shift_cost / (sigma1 * sigma1);
        let t_star = if q > 0.0 { (k / q).sqrt() } else { f64::INFINITY };
        let (v, tt) = integer_minimizer(t_star, t - 1, |tt| tt as f64 * q + k / tt as f64);
        Ok((v, Window { sigma2, t_tilde: tt, tau: t - tt }))
    })?;
    Ok(finish(base, best.value, best.sigma1, best.inner))
}

/// `(1 − c²)/(c^{−2t} − 1)`: the minimal squared allocation per unit
/// squared shift over `t` steps contracting by `c`.
pub(crate) fn geometric_factor(t: usize, ln_c: f64) -> f64 {
    if ln_c == f64::NEG_INFINITY {
        return 0.0;
    }
    -(2.0 * ln_c).exp_m1() / (-2.0 * t as f64 * ln_c).exp_m1()
}

/// Strongly convex losses: the shift decays geometrically, so the window
/// cost is `T̃·Q + αD²(1−c²)/(2η²σ₁²(c^{−2T̃} − 1))`.
pub(crate) fn strongly_convex(acc: &Accountant, s: &Setup, c: f64, ln_c: f64) -> Result<AccountResult> {
    const ID: &str = "strongly_convex_geometric_shift";
    let eta = constant_eta(s)?;
    let base = linear(acc, s, ID)?;
    let (Some(d), true) = (s.diameter, s.iterations >= 2) else {
        return Ok(base);
    };
    let t = s.iterations;
    let shift_cost = s.alpha * d * d / (2.0 * eta * eta);
    let rate = -2.0 * ln_c;
    let best = minimize_split(s.sigma, |sigma1| {
        let sigma2 = sigma2_of(s.sigma, sigma1);
        let q = step_divergence(acc, s, sigma2)?;
        let k = shift_cost / (sigma1 * sigma1);
        let g = |tt: usize| tt as f64 * q + k * geometric_factor(tt, ln_c);
        let t_star = if c == 0.0 {
            1.0
        } else if q > 0.0 {
            let gamma = 2.0 * k * (1.0 - c * c) * (-ln_c) / q;
            let h = 0.5 * gamma;
            (h + (h * (h + 2.0)).sqrt()).ln_1p() / rate
        } else {
            f64::INFINITY
        };
        let (v, tt) = integer_minimizer(t_star, t - 1, g);
        Ok((v, Window { sigma2, t_tilde: tt, tau: t - tt }))
    })?;
    Ok(finish(base, best.value, best.sigma1, best.inner))
}

/// Arbitrary stepsize schedule: scan the window start `τ ∈ [0, T−2]` using
/// suffix sums of the stepsizes.
pub(crate) fn nonuniform(acc: &Accountant, s: &Setup) -> Result<AccountResult> {
    const ID: &str = "nonuniform_stepsize_scan";
    let t = s.iterations;
    if s.schedule.len() != t {
        return Err(PrivacyError::domain(format!(
            "stepsize schedule has {} entries but T = {t}",
            s.schedule.len()
        )));
    }
    let base = linear(acc, s, ID)?;
    let (Some(d), true) = (s.diameter, t >= 2) else {
        return Ok(base);
    };
    // tail[τ] = Σ_{i=τ+1}^{T−1} η_i
    let mut tail = vec![0.0; t];
    for tau in (0..t - 1).rev() {
        tail[tau] = tail[tau + 1] + s.schedule[tau + 1];
    }
    let shift_cost = s.alpha * d * d / 2.0;
    let best = minimize_split(s.sigma, |sigma1| {
        let sigma2 = sigma2_of(s.sigma, sigma1);
        let q = step_divergence(acc, s, sigma2)?;
        let k = shift_cost / (sigma1 * sigma1);
        let mut best = (f64::INFINITY, 0);
        for tau in 0..t - 1 {
            let steps = (t - tau) as f64;
            let v = steps * q + (steps - 1.0) * k / (tail[tau] * tail[tau]);
            if v < best.0 {
                best = (v, tau);
            }
        }
        let tau = best.1;
        Ok((best.0, Window { sigma2, t_tilde: t - tau, tau }))
    })?;
    Ok(finish(base, best.value, best.sigma1, best.inner))
}
