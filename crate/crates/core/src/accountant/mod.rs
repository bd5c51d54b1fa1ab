//! Rényi-DP budgets for noisy gradient methods.
//!
//! Every regime returns the smaller of two bounds: the `T`-linear composition
//! of per-step subsampled Gaussian mechanisms, and a plateau bound obtained
//! by shifting divergence through the last `T̃` contractive steps.

mod convert;
mod cyclic;
mod full_batch;
mod search;
mod subsampled;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{PrivacyError, Result};
use crate::renyi::{sgm_divergence, QuadratureConfig, SgmQuery};
use crate::types::{validate, PrivacyParams, Regime};

pub use convert::{best_dp, rdp_to_dp, solve_sigma};
pub use cyclic::{cyclic_schedule, cyclic_sum_of_squares};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `T` independent subsampled Gaussian steps composed.
    TLinear,
    /// Shift budget spent over the final steps; independent of `T` once
    /// `T` exceeds the optimal window.
    Plateau,
}

/// The optimizing inner variables; unused entries are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub t_tilde: Option<usize>,
    pub tau: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountRequest {
    pub params: PrivacyParams,
    pub alpha: f64,
    pub regime: Regime,
}

impl AccountRequest {
    pub fn new(params: PrivacyParams, alpha: f64, regime: Regime) -> Self {
        AccountRequest {
            params,
            alpha,
            regime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountResult {
    pub epsilon: f64,
    pub branch: Branch,
    pub inner_solution: InnerSolution,
    pub formula_id: String,
    /// Value of the `T`-linear bound, reported even when the plateau wins.
    pub linear_epsilon: f64,
}

/// Quantities shared by all regime formulas.
#[derive(Debug, Clone)]
pub(crate) struct Setup {
    pub n: usize,
    pub b: usize,
    pub q: f64,
    pub sensitivity: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub diameter: Option<f64>,
    pub eta: Option<f64>,
    pub schedule: Vec<f64>,
}

fn setup(req: &AccountRequest) -> Result<Setup> {
    if !(req.alpha > 1.0 && req.alpha.is_finite()) {
        return Err(PrivacyError::domain(format!("Rényi order must be > 1, got {}", req.alpha)));
    }
    let p = &req.params;
    let report = validate(p);
    if !report.is_valid() {
        return Err(PrivacyError::Validation(report.violations));
    }
    if !report.admissible(req.regime) {
        let why = report.reason(req.regime).unwrap_or("not admissible");
        return Err(PrivacyError::domain(format!("regime {}: {why}", req.regime)));
    }
    Ok(Setup {
        n: p.n,
        b: p.b,
        q: p.sampling_rate(),
        sensitivity: p.gradient_sensitivity(),
        sigma: p.sigma,
        alpha: req.alpha,
        iterations: p.iterations,
        diameter: p.diameter.finite(),
        eta: p.stepsize.constant(),
        schedule: p.stepsize_schedule(),
    })
}

/// Memoizing evaluator of regime budgets. The cache holds `S_α(q, σ)` values
/// so sweeps over `T` or the budget reuse quadratures.
#[derive(Debug, Default)]
pub struct Accountant {
    config: QuadratureConfig,
    cache: Mutex<HashMap<[u64; 3], f64>>,
}

impl Accountant {
    pub fn new(config: QuadratureConfig) -> Self {
        Accountant {
            config,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.config
    }

    /// Cached `S_α(q, σ)`.
    pub fn sgm(&self, q: f64, sigma: f64, alpha: f64) -> Result<f64> {
        let key = [q.to_bits(), sigma.to_bits(), alpha.to_bits()];
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let v = sgm_divergence(SgmQuery::new(q, sigma, alpha)?, &self.config)?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    pub fn epsilon(&self, req: &AccountRequest) -> Result<AccountResult> {
        match req.regime {
            Regime::NoisySgd => self.epsilon_noisy_sgd(req),
            Regime::FullBatch => self.epsilon_full_batch(req),
            Regime::Cyclic => self.epsilon_cyclic(req),
            Regime::StronglyConvex => self.epsilon_strongly_convex(req),
            Regime::NonuniformStepsize => self.epsilon_nonuniform(req),
        }
    }

    pub fn epsilon_noisy_sgd(&self, req: &AccountRequest) -> Result<AccountResult> {
        subsampled::noisy_sgd(self, &setup(req)?)
    }

    pub fn epsilon_strongly_convex(&self, req: &AccountRequest) -> Result<AccountResult> {
        let p = &req.params;
        let s = setup(req)?;
        let eta = s.eta.unwrap_or(f64::NAN);
        let big_m = p.smoothness.unwrap_or(f64::NAN);
        let c = contraction_factor(eta, p.strong_convexity, big_m)?;
        let ln_c = ln_contraction(eta, p.strong_convexity, big_m);
        subsampled::strongly_convex(self, &s, c, ln_c)
    }

    pub fn epsilon_nonuniform(&self, req: &AccountRequest) -> Result<AccountResult> {
        subsampled::nonuniform(self, &setup(req)?)
    }

    pub fn epsilon_full_batch(&self, req: &AccountRequest) -> Result<AccountResult> {
        full_batch::full_batch(&setup(req)?)
    }

    pub fn epsilon_cyclic(&self, req: &AccountRequest) -> Result<AccountResult> {
        cyclic::cyclic(&setup(req)?)
    }

    /// One result per horizon in `t_grid`.
    pub fn privacy_curve(
        &self,
        params: &PrivacyParams,
        regime: Regime,
        alpha: f64,
        t_grid: &[usize],
    ) -> Result<Vec<(usize, AccountResult)>> {
        if t_grid.is_empty() {
            return Err(PrivacyError::domain("iteration grid is empty"));
        }
        if t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PrivacyError::domain("iteration grid must be strictly ascending"));
        }
        t_grid
            .iter()
            .map(|&t| {
                let mut p = params.clone();
                p.iterations = t;
                Ok((t, self.epsilon(&AccountRequest::new(p, alpha, regime))?))
            })
            .collect()
    }
}

/// `c = max(|1 − ηm|, |1 − ηM|)`; must be `< 1`.
pub fn contraction_factor(eta: f64, m: f64, big_m: f64) -> Result<f64> {
    let c = (1.0 - eta * m).abs().max((1.0 - eta * big_m).abs());
    if !(c < 1.0) || m <= 0.0 {
        return Err(PrivacyError::domain(format!(
            "contraction factor c = {c} is not below 1 (need m > 0 and η < 2/M); \
             use the merely convex noisy_sgd regime"
        )));
    }
    Ok(c)
}

/// `ln c` without losing precision when `c = 1 − ηλ` is close to 1.
pub(crate) fn ln_contraction(eta: f64, m: f64, big_m: f64) -> f64 {
    let ln_abs = |lam: f64| {
        let x = eta * lam;
        if x < 1.0 {
            (-x).ln_1p()
        } else {
            (x - 1.0).ln()
        }
    };
    ln_abs(m).max(ln_abs(big_m))
}

/// Convenience wrapper using a fresh [`Accountant`] with default quadrature.
pub fn epsilon(req: &AccountRequest) -> Result<AccountResult> {
    Accountant::default().epsilon(req)
}
