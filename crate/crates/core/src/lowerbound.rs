//! Monte-Carlo audit of the one-dimensional lower-bound construction.
//!
//! On `K = [−D/2, D/2]` all records have zero loss except one, whose
//! gradient is the constant `−L`. With that record present the projected
//! walk drifts by `Y_t = ηL/b` whenever the record is sampled
//! (probability `b/n`); without it the walk is symmetric. A positive
//! terminal position separates the two far beyond what small (ε, δ) allow.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{PrivacyError, Result};
use crate::types::{PrivacyParams, SeededStream};

pub const C_D: f64 = 1e3;
pub const C_SIGMA: f64 = 1e-3;
pub const C_ALPHA: f64 = 1e-7;
pub const ALPHA_BAR: f64 = 100.0;
pub const CONFIDENCE: f64 = 0.99;
pub const MIN_REPLICAS: usize = 10_000;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub n: usize,
    pub b: usize,
    pub lipschitz: f64,
    pub eta: f64,
    pub sigma: f64,
    pub diameter: f64,
    pub iterations: usize,
}

impl WalkParams {
    pub fn new(n: usize, b: usize, lipschitz: f64, eta: f64, sigma: f64, diameter: f64, iterations: usize) -> Result<Self> {
        if n == 0 || b == 0 || b > n {
            return Err(PrivacyError::domain(format!("need 1 ≤ b ≤ n (b={b}, n={n})")));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(PrivacyError::domain("L must be ≥ 0"));
        }
        for (name, v) in [("η", eta), ("σ", sigma), ("D", diameter)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PrivacyError::domain(format!("{name} must be > 0")));
            }
        }
        if iterations == 0 {
            return Err(PrivacyError::domain("T must be ≥ 1"));
        }
        Ok(WalkParams {
            n,
            b,
            lipschitz,
            eta,
            sigma,
            diameter,
            iterations,
        })
    }

    /// The walk described by accountant parameters; needs a constant
    /// stepsize and a finite diameter.
    pub fn from_params(p: &PrivacyParams) -> Result<Self> {
        let eta = p
            .stepsize
            .constant()
            .ok_or_else(|| PrivacyError::domain("the audit needs a constant stepsize"))?;
        let d = p
            .diameter
            .finite()
            .ok_or_else(|| PrivacyError::domain("the audit needs a finite diameter"))?;
        WalkParams::new(p.n, p.b, p.lipschitz, eta, p.sigma, d, p.iterations)
    }

    /// `round(0.75·Dn/(Lη))`; the full run when `L = 0`.
    pub fn t_bar(&self) -> usize {
        if self.lipschitz == 0.0 {
            return self.iterations;
        }
        (0.75 * self.diameter * self.n as f64 / (self.lipschitz * self.eta)).round() as usize
    }

    pub fn bias_step(&self) -> f64 {
        self.eta * self.lipschitz / self.b as f64
    }

    /// Violated hypotheses of the construction (empty when all hold).
    pub fn precondition_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let t_bar = self.t_bar().max(1) as f64;
        if self.diameter < C_D * self.eta * self.lipschitz {
            v.push(format!(
                "D = {} is below c_D·η·L = {}",
                self.diameter,
                C_D * self.eta * self.lipschitz
            ));
        }
        let var_limit = C_SIGMA * self.diameter * self.diameter / (self.eta * self.eta * t_bar);
        if self.sigma * self.sigma > var_limit {
            v.push(format!(
                "σ² = {} exceeds c_σ·D²/(η²·T̄) = {var_limit}",
                self.sigma * self.sigma
            ));
        }
        v
    }
}

/// Estimated probability with its exact two-sided interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Clopper-Pearson interval at the given two-sided confidence.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Proportion {
    let tail = 0.5 * (1.0 - confidence);
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).expect("valid shape").inverse_cdf(tail)
    };
    let upper = if successes >= trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).expect("valid shape").inverse_cdf(1.0 - tail)
    };
    Proportion {
        successes,
        trials,
        estimate: if trials == 0 { f64::NAN } else { k / n },
        lower,
        upper,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Refuted,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub params: WalkParams,
    pub seed: SeededStream,
    pub replicas: u64,
    pub t_bar: usize,
    pub confidence: f64,
    /// `P[W_T ≥ 0]` for the symmetric walk.
    pub p_sym: Proportion,
    /// `P[W'_T ≥ 0]` for the biased walk.
    pub p_biased: Proportion,
    /// `P[W''_T ≥ 0]` for the auxiliary walk; absent when `T < T̄`.
    pub p_aux: Option<Proportion>,
    /// Replicas where `W'_t < W_t` or `W'_t < W''_t` at some step.
    pub dominance_violations: u64,
    /// Fraction of replicas where the auxiliary walk reached `D/2`.
    pub aux_boundary_fraction: Option<f64>,
    /// Fraction of replicas whose total bias over the final `T̄` steps lies
    /// within 15% of its mean.
    pub bias_concentration_fraction: Option<f64>,
    pub precondition_violations: Vec<String>,
}

impl AuditReport {
    /// `p_biased.lower − e^ε·p_sym.upper`.
    pub fn delta_hat(&self, epsilon: f64) -> f64 {
        self.p_biased.lower - epsilon.exp() * self.p_sym.upper
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    sym: u64,
    biased: u64,
    aux: u64,
    dominance: u64,
    aux_boundary: u64,
    bias_concentrated: u64,
}

impl Counts {
    fn add(self, o: Counts) -> Counts {
        Counts {
            sym: self.sym + o.sym,
            biased: self.biased + o.biased,
            aux: self.aux + o.aux,
            dominance: self.dominance + o.dominance,
            aux_boundary: self.aux_boundary + o.aux_boundary,
            bias_concentrated: self.bias_concentrated + o.bias_concentrated,
        }
    }
}

fn simulate_chunk(wp: &WalkParams, replicas: usize, stream: SeededStream) -> Counts {
    let mut rng = stream.rng();
    let half = 0.5 * wp.diameter;
    let scale = wp.eta * wp.sigma;
    let q = wp.b as f64 / wp.n as f64;
    let step = wp.bias_step();
    let t = wp.iterations;
    let t_bar = wp.t_bar();
    let aux_start = (t >= t_bar).then(|| t - t_bar);
    let expected_bias = t_bar as f64 * q * step;
    let mut c = Counts::default();
    for _ in 0..replicas {
        let (mut w, mut wb) = (0.0f64, 0.0f64);
        let mut wa = -half;
        let mut dominated = true;
        let mut touched = false;
        let mut bias = 0.0;
        for s in 0..t {
            let g: f64 = StandardNormal.sample(&mut rng);
            let z = scale * g;
            let y = if rng.random_bool(q) { step } else { 0.0 };
            w = (w + z).clamp(-half, half);
            wb = (wb + y + z).clamp(-half, half);
            if wb < w {
                dominated = false;
            }
            if let Some(start) = aux_start {
                if s >= start {
                    bias += y;
                    wa = (wa + y + z).min(half);
                    if wa >= half {
                        touched = true;
                    }
                    if wb < wa {
                        dominated = false;
                    }
                }
            }
        }
        c.sym += (w >= 0.0) as u64;
        c.biased += (wb >= 0.0) as u64;
        c.dominance += (!dominated) as u64;
        if aux_start.is_some() {
            c.aux += (wa >= 0.0) as u64;
            c.aux_boundary += touched as u64;
            c.bias_concentrated += ((bias - expected_bias).abs() <= 0.15 * expected_bias) as u64;
        }
    }
    c
}

/// Simulate the symmetric, biased and auxiliary walks with shared noise and
/// shared sampling within each replica. Fails when the construction's
/// hypotheses are violated or fewer than 10⁴ replicas are requested.
pub fn simulate_walks(wp: &WalkParams, replicas: usize, stream: SeededStream) -> Result<AuditReport> {
    let violations = wp.precondition_violations();
    if !violations.is_empty() {
        return Err(PrivacyError::domain(format!(
            "lower-bound construction hypotheses violated: {}",
            violations.join("; ")
        )));
    }
    if replicas < MIN_REPLICAS {
        return Err(PrivacyError::domain(format!(
            "need at least {MIN_REPLICAS} replicas, got {replicas}"
        )));
    }
    simulate_walks_unchecked(wp, replicas, stream)
}

/// As [`simulate_walks`], but records violated hypotheses in the report
/// instead of failing.
pub fn simulate_walks_unchecked(wp: &WalkParams, replicas: usize, stream: SeededStream) -> Result<AuditReport> {
    if replicas == 0 {
        return Err(PrivacyError::domain("need at least one replica"));
    }
    let chunks = replicas.div_ceil(CHUNK);
    let total = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let size = CHUNK.min(replicas - i * CHUNK);
            simulate_chunk(wp, size, stream.fork(i as u64))
        })
        .reduce(Counts::default, Counts::add);
    let n = replicas as u64;
    let aux = wp.iterations >= wp.t_bar();
    let frac = |k: u64| aux.then(|| k as f64 / n as f64);
    Ok(AuditReport {
        params: *wp,
        seed: stream,
        replicas: n,
        t_bar: wp.t_bar(),
        confidence: CONFIDENCE,
        p_sym: clopper_pearson(total.sym, n, CONFIDENCE),
        p_biased: clopper_pearson(total.biased, n, CONFIDENCE),
        p_aux: aux.then(|| clopper_pearson(total.aux, n, CONFIDENCE)),
        dominance_violations: total.dominance,
        aux_boundary_fraction: frac(total.aux_boundary),
        bias_concentration_fraction: frac(total.bias_concentrated),
        precondition_violations: wp.precondition_violations(),
    })
}

/// REFUTED when the biased walk's positivity probability provably exceeds
/// `e^ε` times the symmetric one plus `δ`, using conservative interval ends.
pub fn refute_dp(report: &AuditReport, epsilon: f64, delta: f64) -> Verdict {
    if report.delta_hat(epsilon) > delta {
        Verdict::Refuted
    } else {
        Verdict::Inconclusive
    }
}

/// `c_α·ᾱ·L²·min(T, T̄)/(n²σ²)`: the RDP level the construction rules out.
pub fn rdp_refutation_scale(wp: &WalkParams) -> f64 {
    let horizon = wp.iterations.min(wp.t_bar()) as f64;
    C_ALPHA * ALPHA_BAR * wp.lipschitz * wp.lipschitz * horizon / ((wp.n * wp.n) as f64 * wp.sigma * wp.sigma)
}
