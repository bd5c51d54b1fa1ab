//! RDP to (ε, δ)-DP conversion and noise calibration.

use super::{AccountRequest, Accountant};
use crate::error::{PrivacyError, Result};
use crate::types::{PrivacyParams, Regime};

/// `ε_α + ln(1/δ)/(α − 1)`.
pub fn rdp_to_dp(alpha: f64, epsilon_alpha: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PrivacyError::domain(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !(alpha > 1.0) {
        return Err(PrivacyError::domain(format!("Rényi order must be > 1, got {alpha}")));
    }
    if !(epsilon_alpha >= 0.0) {
        return Err(PrivacyError::domain(format!("RDP bound must be ≥ 0, got {epsilon_alpha}")));
    }
    Ok(epsilon_alpha - delta.ln() / (alpha - 1.0))
}

/// Smallest DP epsilon over `alpha_grid` and the order attaining it; ties
/// go to the smaller order.
pub fn best_dp(
    acc: &Accountant,
    params: &PrivacyParams,
    regime: Regime,
    delta: f64,
    alpha_grid: &[f64],
) -> Result<(f64, f64)> {
    if alpha_grid.is_empty() {
        return Err(PrivacyError::domain("order grid is empty"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &alpha in alpha_grid {
        let rdp = acc.epsilon(&AccountRequest::new(params.clone(), alpha, regime))?.epsilon;
        let eps = rdp_to_dp(alpha, rdp, delta)?;
        if best.is_none_or(|(e, a)| eps < e || (eps == e && alpha < a)) {
            best = Some((eps, alpha));
        }
    }
    Ok(best.expect("non-empty grid"))
}

const SIGMA_START: f64 = 1e-3;
const SIGMA_LIMIT: f64 = 1e9;

/// Smallest `σ` (to `10⁻⁶` relative) whose budget is at most `budget`.
/// The `sigma` field of `params` is ignored.
pub fn solve_sigma(acc: &Accountant, params: &PrivacyParams, regime: Regime, alpha: f64, budget: f64) -> Result<f64> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(PrivacyError::domain(format!("budget must be > 0, got {budget}")));
    }
    let eps = |sigma: f64| -> Result<f64> {
        let p = params.clone().with_sigma(sigma);
        Ok(acc.epsilon(&AccountRequest::new(p, alpha, regime))?.epsilon)
    };
    let monotone = |smaller_sigma: f64, e_small: f64, larger_sigma: f64, e_large: f64| -> Result<()> {
        if e_large > e_small * (1.0 + 1e-6) {
            return Err(PrivacyError::numerical(format!(
                "budget increased with noise: ε({smaller_sigma}) = {e_small} < ε({larger_sigma}) = {e_large}"
            )));
        }
        Ok(())
    };

    let mut sigma = SIGMA_START;
    let mut e = eps(sigma)?;
    let (mut lo, mut hi);
    if e <= budget {
        // Already feasible: walk down to an infeasible point.
        hi = sigma;
        loop {
            let s = hi / 2.0;
            let es = eps(s)?;
            monotone(s, es, hi, e)?;
            if es > budget {
                lo = s;
                break;
            }
            if s < 1e-300 {
                return Ok(s);
            }
            hi = s;
            e = es;
        }
    } else {
        loop {
            let s = sigma * 2.0;
            if s > SIGMA_LIMIT {
                return Err(PrivacyError::Infeasible(format!(
                    "budget {budget} not reached for σ ≤ {SIGMA_LIMIT:e} (ε = {e})"
                )));
            }
            let es = eps(s)?;
            monotone(sigma, e, s, es)?;
            if es <= budget {
                lo = sigma;
                hi = s;
                break;
            }
            sigma = s;
            e = es;
        }
    }
    while hi / lo - 1.0 > 1e-7 {
        let mid = (lo * hi).sqrt();
        if eps(mid)? <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
