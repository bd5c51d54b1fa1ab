//! Full-batch gradient descent (`b = n`, no subsampling): a closed form.

use super::search::integer_minimizer;
use super::{AccountResult, Branch, InnerSolution, Setup};
use crate::error::{PrivacyError, Result};

/// With per-step shift `x = ηΔ/n` and `D̃ = D + x`, the budget is
/// `α/(2η²σ²)·min{T·x², min_{T̃ ≤ T} (D̃ + T̃x)²/T̃}`; the inner minimum is
/// at `T̃ = D̃/x`.
pub(crate) fn full_batch(s: &Setup) -> Result<AccountResult> {
    let eta = s
        .eta
        .ok_or_else(|| PrivacyError::domain("full-batch regime requires a constant stepsize"))?;
    let x = eta * s.sensitivity / s.n as f64;
    let scale = s.alpha / (2.0 * eta * eta * s.sigma * s.sigma);
    let t = s.iterations;
    let linear = scale * t as f64 * x * x;
    let mut out = AccountResult {
        epsilon: linear,
        branch: Branch::TLinear,
        inner_solution: InnerSolution::default(),
        formula_id: "full_batch_closed_form".into(),
        linear_epsilon: linear,
    };
    if let Some(d) = s.diameter {
        let dt = d + x;
        let (v, tt) = integer_minimizer(dt / x, t, |tt| {
            let w = dt + tt as f64 * x;
            w * w / tt as f64
        });
        let plateau = scale * v;
        if plateau < linear {
            out.epsilon = plateau;
            out.branch = Branch::Plateau;
            out.inner_solution = InnerSolution {
                t_tilde: Some(tt),
                tau: Some(t - tt),
                ..Default::default()
            };
        }
    }
    Ok(out)
}
