//! Shifted-divergence recursion for contractive noisy iterations.
//!
//! A schedule spends a starting shift `z₀` over `R` noisy steps: at step `t`
//! the map discrepancy `s_t` adds to the shift, the allocation `a_t` is paid
//! for with the step's Gaussian noise `σ_t`, and the remainder contracts by
//! `c`. A feasible schedule ends with zero shift and costs
//! `(α/2)·Σ a_t²/σ_t²`.

use serde::{Deserialize, Serialize};

use crate::error::{PrivacyError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PabiSchedule {
    pub shifts: Vec<f64>,
    pub allocations: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub initial_shift: f64,
    pub contraction: f64,
}

impl PabiSchedule {
    pub fn new(
        shifts: Vec<f64>,
        allocations: Vec<f64>,
        noise_sigmas: Vec<f64>,
        initial_shift: f64,
        contraction: f64,
    ) -> Result<Self> {
        let r = shifts.len();
        if r == 0 {
            return Err(PrivacyError::domain("schedule must have at least one step"));
        }
        if allocations.len() != r || noise_sigmas.len() != r {
            return Err(PrivacyError::domain(format!(
                "schedule lengths differ: {} shifts, {} allocations, {} noise scales",
                r,
                allocations.len(),
                noise_sigmas.len()
            )));
        }
        if shifts.iter().chain(&allocations).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(PrivacyError::domain("shifts and allocations must be finite and ≥ 0"));
        }
        if noise_sigmas.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(PrivacyError::domain("noise scales must be > 0"));
        }
        if !(initial_shift >= 0.0 && initial_shift.is_finite()) {
            return Err(PrivacyError::domain("initial shift must be ≥ 0"));
        }
        if !(contraction > 0.0 && contraction <= 1.0) {
            return Err(PrivacyError::domain(format!(
                "contraction factor must lie in (0, 1], got {contraction}"
            )));
        }
        Ok(PabiSchedule {
            shifts,
            allocations,
            noise_sigmas,
            initial_shift,
            contraction,
        })
    }

    /// `a_t = z₀/R` with zero shifts and constant noise.
    pub fn uniform(steps: usize, z0: f64, sigma: f64) -> Result<Self> {
        let r = steps.max(1);
        PabiSchedule::new(vec![0.0; r], vec![z0 / r as f64; r], vec![sigma; r], z0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PabiResult {
    pub epsilon_over_alpha: f64,
    pub epsilon: f64,
    /// `z_0, z_1, …, z_R`.
    pub trace: Vec<f64>,
    pub feasible: bool,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Run the recursion `z_t = c·z_{t−1} + s_t − a_t` and price the schedule.
/// The recursion carries a compensation term so long uniform schedules still
/// land on zero within the feasibility tolerance.
pub fn evaluate(schedule: &PabiSchedule, alpha: f64) -> PabiResult {
    let c = schedule.contraction;
    let z0 = schedule.initial_shift;
    let tol = 1e-12 * z0.max(1.0);
    let mut trace = Vec::with_capacity(schedule.len() + 1);
    trace.push(z0);
    let (mut z, mut comp) = (z0, 0.0);
    let mut nonnegative = true;
    let (mut cost, mut cost_comp) = (0.0, 0.0);
    for ((&s, &a), &sig) in schedule
        .shifts
        .iter()
        .zip(&schedule.allocations)
        .zip(&schedule.noise_sigmas)
    {
        let p = c * z;
        let ep = c.mul_add(z, -p);
        let (d, ed) = two_sum(s, -a);
        let (sum, es) = two_sum(p, d);
        comp = c * comp + ep + ed + es;
        (z, comp) = two_sum(sum, comp);
        let zt = z + comp;
        if zt < -tol {
            nonnegative = false;
        }
        trace.push(zt);

        let term = a * a / (sig * sig);
        let (ns, e) = two_sum(cost, term);
        cost = ns;
        cost_comp += e;
    }
    let epsilon_over_alpha = 0.5 * (cost + cost_comp);
    let last = *trace.last().unwrap_or(&z0);
    PabiResult {
        epsilon_over_alpha,
        epsilon: alpha * epsilon_over_alpha,
        trace,
        feasible: nonnegative && last.abs() <= tol,
    }
}

/// Minimal `Σ a_t²` among zero-shift schedules that exhaust `z₀` under
/// contraction `c < 1` in `R` steps: `z₀²(1−c²)/(c^{−2R} − 1)`.
pub fn geometric_sum_of_squares(steps: usize, z0: f64, c: f64) -> f64 {
    let ln_c = c.ln();
    let num = -(2.0 * ln_c).exp_m1();
    let den = (-2.0 * steps as f64 * ln_c).exp_m1();
    z0 * z0 * num / den
}

/// The minimum-cost allocation `a_t ∝ c^{R−t}` for zero shifts and constant
/// noise `sigma`.
pub fn optimize_geometric_allocations(steps: usize, z0: f64, c: f64, sigma: f64) -> Result<PabiSchedule> {
    if !(c > 0.0 && c < 1.0) {
        return Err(PrivacyError::domain(format!(
            "geometric allocation needs 0 < c < 1 (got {c}); use the uniform allocation for c = 1"
        )));
    }
    if steps == 0 {
        return Err(PrivacyError::domain("need at least one step"));
    }
    let r = steps as f64;
    let ln_c = c.ln();
    // λ = c^R·z₀·(1−c²)/(1−c^{2R}), a_t = λ·c^{R−t}
    let ln_lambda = r * ln_c + z0.ln() + (-(2.0 * ln_c).exp_m1()).ln() - (-(2.0 * r * ln_c).exp_m1()).ln();
    let allocations = (1..=steps)
        .map(|t| {
            if z0 == 0.0 {
                0.0
            } else {
                (ln_lambda + (r - t as f64) * ln_c).exp()
            }
        })
        .collect();
    PabiSchedule::new(vec![0.0; steps], allocations, vec![sigma; steps], z0, c)
}
