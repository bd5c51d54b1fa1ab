//! Rényi divergences of Gaussians and of the sampled Gaussian mechanism.
//!
//! `S_α(q, σ) = D_α(N(0,σ²) ‖ (1−q)N(0,σ²) + qN(1,σ²))` is evaluated by
//! adaptive quadrature with every density ratio formed in log space. A
//! seeded Monte-Carlo estimator provides an independent check.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PrivacyError, Result};
use crate::quadrature;
use crate::types::SeededStream;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_406;

/// `D_α(N(0,σ²) ‖ N(μ,σ²)) = αμ²/(2σ²)`.
pub fn gaussian_renyi(mean_shift: f64, sigma: f64, alpha: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(PrivacyError::domain(format!("σ must be > 0, got {sigma}")));
    }
    if !(alpha >= 1.0) {
        return Err(PrivacyError::domain(format!("α must be ≥ 1, got {alpha}")));
    }
    Ok(alpha * mean_shift * mean_shift / (2.0 * sigma * sigma))
}

/// The small-`q` envelope `2αq²/σ²`, valid for `q < 1/5`, `σ ≥ 4` and
/// `1 < α ≤ alpha_star(q, σ)`.
pub fn sgm_envelope(q: f64, sigma: f64, alpha: f64) -> f64 {
    2.0 * alpha * q * q / (sigma * sigma)
}

/// One evaluation point of `S_α(q, σ)`; `σ` is in units of the unit shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgmQuery {
    pub q: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl SgmQuery {
    /// `q = 0` is accepted and yields a zero divergence.
    pub fn new(q: f64, sigma: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(PrivacyError::domain(format!("q must lie in (0, 1], got {q}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PrivacyError::domain(format!("σ must be > 0, got {sigma}")));
        }
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(PrivacyError::domain(format!("α must be ≥ 1, got {alpha}")));
        }
        Ok(SgmQuery { q, sigma, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub relative_tolerance: f64,
    pub max_subdivisions: usize,
    /// Half-width of the integration window in units of σ.
    pub integration_half_width: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            relative_tolerance: 1e-10,
            max_subdivisions: 4000,
            integration_half_width: 40.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance <= 1e-3) {
            return Err(PrivacyError::domain("relative_tolerance must lie in (0, 1e-3]"));
        }
        if !(self.integration_half_width >= 10.0) {
            return Err(PrivacyError::domain("integration_half_width must be ≥ 10"));
        }
        if self.max_subdivisions == 0 {
            return Err(PrivacyError::domain("max_subdivisions must be ≥ 1"));
        }
        Ok(())
    }
}

/// Precomputed constants of the mixture log-ratio for fixed `(q, σ)`.
#[derive(Debug, Clone, Copy)]
struct Mixture {
    q: f64,
    ln_q: f64,
    ln_1m_q: f64,
    inv_two_var: f64,
    ln_norm: f64,
}

impl Mixture {
    fn new(q: f64, sigma: f64) -> Self {
        Mixture {
            q,
            ln_q: q.ln(),
            ln_1m_q: (-q).ln_1p(),
            inv_two_var: 0.5 / (sigma * sigma),
            ln_norm: sigma.ln() + LN_SQRT_2PI,
        }
    }

    /// Log-density of the reference `N(0, σ²)`.
    fn ln_p0(&self, x: f64) -> f64 {
        -x * x * self.inv_two_var - self.ln_norm
    }

    /// Log-density of the shifted component `N(1, σ²)`; equals `ln_p0 + u`
    /// without the cancellation between those two when `σ` is small.
    fn ln_p1(&self, x: f64) -> f64 {
        let r = x - 1.0;
        -r * r * self.inv_two_var - self.ln_norm
    }

    /// Exponent of the mixture's likelihood ratio: `p_mix/p0 = 1 − q + q·e^u`.
    fn u(&self, x: f64) -> f64 {
        (2.0 * x - 1.0) * self.inv_two_var
    }

    /// `ln(p_mix/p0) = ln(1 − q + q·e^u)`.
    fn ln_ratio(&self, u: f64) -> f64 {
        if u < 40.0 {
            let y = self.q * u.exp_m1();
            if y.abs() < 0.5 {
                return y.ln_1p();
            }
        }
        log_add_exp(self.ln_1m_q, self.ln_q + u)
    }

    /// `d/du ln(1 − q + q·e^u)`.
    fn ratio_slope(&self, u: f64) -> f64 {
        if self.ln_1m_q == f64::NEG_INFINITY {
            return 1.0;
        }
        let z = u + self.ln_q - self.ln_1m_q;
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `(1 + y)^{−a} − 1 + a·y` by its binomial series, for small `|y|` and `a·|y|`.
fn binomial_remainder(a: f64, y: f64) -> f64 {
    let mut coef = -a;
    let mut power = y;
    let mut sum = 0.0;
    for k in 2..80 {
        coef *= (-a - (k as f64 - 1.0)) / k as f64;
        power *= y;
        let term = coef * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `y − ln(1 + y)`.
fn kl_kernel(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        let mut sum = 0.0;
        let mut power = y;
        for k in 2..16 {
            power *= y;
            let term = power / k as f64;
            sum += if k % 2 == 0 { term } else { -term };
        }
        sum
    } else {
        y - y.ln_1p()
    }
}

/// Argmax of the log-integrand `ln p0(x) − (α−1)·ln(p_mix/p0)(x)`, which is
/// strictly concave and peaks in `[−(α−1), 0]`.
fn integrand_peak(mix: &Mixture, a1: f64) -> f64 {
    let slope = |x: f64| -x - a1 * mix.ratio_slope(mix.u(x));
    let (mut lo, mut hi) = (-a1, 0.0);
    if slope(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn breakpoints(lo: f64, hi: f64, centers: &[f64], sigma: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi, 0.5];
    for &c in centers {
        pts.push(c);
        for k in [1.0, 2.0, 4.0, 8.0, 16.0] {
            pts.push(c - k * sigma);
            pts.push(c + k * sigma);
        }
    }
    pts.retain(|&p| p >= lo && p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    pts
}

/// For small `σ` the two mixture components do not overlap under `p0`: the
/// likelihood ratio only departs from `1 − q` beyond
/// `x_t = ½ − σ²·ln((α−1)q/(1−q))`. Once that point lies more than `w`
/// standard deviations out, the divergence is `−ln(1 − q)` to double
/// precision (the neglected mass is below `e^{−w²/2}`).
fn separated_limit(q: f64, sigma: f64, alpha: f64, w: f64) -> Option<f64> {
    if q >= 1.0 {
        return None;
    }
    let lead = ((alpha - 1.0).max(1.0) * q / (1.0 - q)).ln().max(0.0);
    let z = (0.5 - sigma * sigma * lead) / sigma;
    (z >= w && 0.5 * z * z + q.ln() > 50.0).then(|| -(-q).ln_1p())
}

/// `S_α(q, σ)` by adaptive quadrature. `α = 1` returns the KL divergence.
pub fn sgm_divergence(query: SgmQuery, cfg: &QuadratureConfig) -> Result<f64> {
    cfg.validate()?;
    let SgmQuery { q, sigma, alpha } = query;
    if q == 0.0 {
        return Ok(0.0);
    }
    let w = cfg.integration_half_width;
    if let Some(v) = separated_limit(q, sigma, alpha, w) {
        return Ok(v);
    }
    let mix = Mixture::new(q, sigma);
    let a1 = alpha - 1.0;
    let tol = cfg.relative_tolerance;

    if a1 == 0.0 {
        let pts = breakpoints(-w * sigma, 1.0 + w * sigma, &[0.0, 1.0], sigma);
        let f = |x: f64| {
            let lp0 = mix.ln_p0(x);
            let u = mix.u(x);
            if u < 500.0 {
                let y = q * u.exp_m1();
                if y.abs() < 0.5 {
                    return lp0.exp() * kl_kernel(y);
                }
                let p0 = lp0.exp();
                p0 * y - p0 * mix.ln_ratio(u)
            } else {
                let p0 = lp0.exp();
                q * mix.ln_p1(x).exp() - q * p0 - p0 * mix.ln_ratio(u)
            }
        };
        let r = quadrature::integrate(f, &pts, tol, cfg.max_subdivisions)?;
        return Ok(r.value.max(0.0));
    }

    let peak = integrand_peak(&mix, a1);
    let lo = (peak - w * sigma).min(-w * sigma);
    let hi = 1.0 + w * sigma;
    let pts = breakpoints(lo, hi, &[peak, 0.0, 1.0], sigma);
    let ln_integrand = |x: f64| mix.ln_p0(x) - a1 * mix.ln_ratio(mix.u(x));
    let h_max = ln_integrand(peak);

    if h_max > 600.0 {
        // The integral itself is astronomically large; no cancellation issue.
        let f = |x: f64| (ln_integrand(x) - h_max).exp();
        let r = quadrature::integrate(f, &pts, tol, cfg.max_subdivisions)?;
        let s = (h_max + r.value.ln()) / a1;
        if !s.is_finite() {
            return Err(PrivacyError::numerical(format!("S_α overflow at {query:?}")));
        }
        return Ok(s.max(0.0));
    }

    // ∫ p0·[(p0/p_mix)^{α−1} − 1] dx, with the first-order term
    // (α−1)·q·(e^u − 1), whose p0-integral is exactly zero, added back in.
    let f = |x: f64| {
        let lp0 = mix.ln_p0(x);
        let u = mix.u(x);
        if u < 500.0 {
            let y = q * u.exp_m1();
            if y.abs() < 0.1 && a1 * y.abs() < 0.1 {
                return lp0.exp() * binomial_remainder(a1, y);
            }
        }
        let p0 = lp0.exp();
        let v = -a1 * mix.ln_ratio(u);
        let first = if v < 500.0 {
            p0 * v.exp_m1()
        } else {
            (lp0 + v).exp() - p0
        };
        let second = if u < 500.0 {
            p0 * u.exp_m1()
        } else {
            mix.ln_p1(x).exp() - p0
        };
        first + a1 * q * second
    };
    let r = quadrature::integrate(f, &pts, tol, cfg.max_subdivisions)?;
    let s = r.value.max(0.0).ln_1p() / a1;
    if !s.is_finite() {
        return Err(PrivacyError::numerical(format!("S_α overflow at {query:?}")));
    }
    Ok(s)
}

/// Monte-Carlo estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Estimate `S_α(q, σ)` from `X ~ N(0, σ²)` draws of `(p0/p_mix)(X)^{α−1}`,
/// averaged with a running log-mean-exp.
pub fn sgm_divergence_mc(query: SgmQuery, samples: usize, stream: SeededStream) -> Result<McEstimate> {
    if samples < 10_000 {
        return Err(PrivacyError::domain("Monte-Carlo oracle needs at least 10^4 samples"));
    }
    let SgmQuery { q, sigma, alpha } = query;
    if q == 0.0 {
        return Ok(McEstimate {
            estimate: 0.0,
            std_error: 0.0,
        });
    }
    let mix = Mixture::new(q, sigma);
    let a1 = alpha - 1.0;
    let mut rng = stream.rng();
    let n = samples as f64;

    if a1 == 0.0 {
        let (mut mean, mut m2) = (0.0, 0.0);
        for i in 0..samples {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = -mix.ln_ratio(mix.u(sigma * z));
            let delta = v - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (v - mean);
        }
        let var = m2 / (n - 1.0);
        return Ok(McEstimate {
            estimate: mean,
            std_error: (var / n).sqrt(),
        });
    }

    let mut shift = f64::NEG_INFINITY;
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let z: f64 = StandardNormal.sample(&mut rng);
        let lw = -a1 * mix.ln_ratio(mix.u(sigma * z));
        if !lw.is_finite() {
            return Err(PrivacyError::numerical(format!(
                "non-finite log-weight {lw} in Monte-Carlo oracle"
            )));
        }
        if lw > shift {
            let scale = (shift - lw).exp();
            s1 *= scale;
            s2 *= scale * scale;
            shift = lw;
        }
        let e = (lw - shift).exp();
        s1 += e;
        s2 += e * e;
    }
    let mean_scaled = s1 / n;
    let estimate = (shift + mean_scaled.ln()) / a1;
    let rel_var = ((s2 / n) / (mean_scaled * mean_scaled) - 1.0).max(0.0) * n / (n - 1.0);
    let std_error = (rel_var / n).sqrt() / a1;
    if !estimate.is_finite() || !std_error.is_finite() {
        return Err(PrivacyError::numerical("Monte-Carlo oracle overflowed"));
    }
    Ok(McEstimate {
        estimate,
        std_error,
    })
}

/// Whether `α` satisfies both admissibility inequalities of the small-`q`
/// envelope at `(q, σ)`.
pub fn alpha_admissible(q: f64, sigma: f64, alpha: f64) -> bool {
    if !(alpha > 1.0) {
        return false;
    }
    let var = sigma * sigma;
    let m = (1.0 / (q * (alpha - 1.0))).ln_1p();
    let first = alpha <= m * var / 2.0 - var.ln();
    let den = m + (q * alpha).ln() + 1.0 / (2.0 * var);
    if !(den > 0.0) {
        return false;
    }
    let second = alpha <= (m * m * var / 2.0 - (5.0 * var).ln()) / den;
    first && second
}

/// Largest `α > 1` admitted by [`alpha_admissible`], or `1` when none is.
pub fn alpha_star(q: f64, sigma: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(PrivacyError::domain(format!("q must lie in (0, 1), got {q}")));
    }
    if !(sigma > 0.0) {
        return Err(PrivacyError::domain(format!("σ must be > 0, got {sigma}")));
    }
    const LIMIT: f64 = 1e8;
    let mut step: f64 = 1e-6;
    let mut last_feasible: Option<f64> = None;
    let mut next_infeasible = None;
    loop {
        let a = (1.0 + step).min(LIMIT);
        if alpha_admissible(q, sigma, a) {
            last_feasible = Some(a);
            next_infeasible = None;
        } else if last_feasible.is_some() && next_infeasible.is_none() {
            next_infeasible = Some(a);
        }
        if a >= LIMIT {
            break;
        }
        step *= 2.0;
    }
    let Some(mut lo) = last_feasible else {
        return Ok(1.0);
    };
    let Some(mut hi) = next_infeasible else {
        return Ok(lo);
    };
    while hi - lo > 1e-6 * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if alpha_admissible(q, sigma, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
