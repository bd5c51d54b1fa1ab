//! Shared domain types for the accountant, optimizer, and auditor.
//!
//! Noise convention: a step with stepsize `η` and noise multiplier `σ`
//! injects `N(0, η²σ²I)`. To convert from a convention where the injected
//! standard deviation is `s` directly, use `σ = s/η`; from the DP-SGD
//! convention where the batch-sum gradient receives `N(0, z²C²I)` with
//! clipping norm `C`, use `σ = zC/b`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{PrivacyError, Result};

/// Notion of dataset adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    Replace,
    Remove,
}

/// Constant stepsize or an explicit per-step schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Stepsize {
    Constant(f64),
    Schedule(Vec<f64>),
}

impl Stepsize {
    /// Explicit length-`iterations` schedule. A constant stepsize expands to
    /// `iterations` copies; an explicit schedule is returned as stored.
    pub fn schedule(&self, iterations: usize) -> Vec<f64> {
        match self {
            Stepsize::Constant(eta) => vec![*eta; iterations],
            Stepsize::Schedule(s) => s.clone(),
        }
    }

    /// The common value when every step uses the same stepsize.
    pub fn constant(&self) -> Option<f64> {
        match self {
            Stepsize::Constant(eta) => Some(*eta),
            Stepsize::Schedule(s) => {
                let first = *s.first()?;
                s.iter().all(|&x| x == first).then_some(first)
            }
        }
    }

    fn entries(&self) -> &[f64] {
        match self {
            Stepsize::Constant(eta) => std::slice::from_ref(eta),
            Stepsize::Schedule(s) => s,
        }
    }
}

/// Constraint-set diameter; `Unbounded` serializes as the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diameter {
    Finite(f64),
    Unbounded,
}

impl Diameter {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Diameter::Finite(d) => Some(*d),
            Diameter::Unbounded => None,
        }
    }
}

impl Serialize for Diameter {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Diameter::Finite(d) => s.serialize_f64(*d),
            Diameter::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Diameter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct DiameterVisitor;

        impl Visitor<'_> for DiameterVisitor {
            type Value = Diameter;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or the string \"unbounded\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Diameter, E> {
                Ok(Diameter::Finite(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Diameter, E> {
                Ok(Diameter::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Diameter, E> {
                Ok(Diameter::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Diameter, E> {
                match v {
                    "unbounded" | "inf" | "infinity" => Ok(Diameter::Unbounded),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }

        d.deserialize_any(DiameterVisitor)
    }
}

/// Which accountant formula to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NoisySgd,
    FullBatch,
    Cyclic,
    StronglyConvex,
    NonuniformStepsize,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::NoisySgd,
        Regime::FullBatch,
        Regime::Cyclic,
        Regime::StronglyConvex,
        Regime::NonuniformStepsize,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::NoisySgd => "noisy_sgd",
            Regime::FullBatch => "full_batch",
            Regime::Cyclic => "cyclic",
            Regime::StronglyConvex => "strongly_convex",
            Regime::NonuniformStepsize => "nonuniform_stepsize",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = PrivacyError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "noisy_sgd" | "sgd" => Ok(Regime::NoisySgd),
            "full_batch" => Ok(Regime::FullBatch),
            "cyclic" | "noisy_cgd" => Ok(Regime::Cyclic),
            "strongly_convex" => Ok(Regime::StronglyConvex),
            "nonuniform_stepsize" | "nonuniform" => Ok(Regime::NonuniformStepsize),
            _ => Err(PrivacyError::domain(format!("unknown regime `{s}`"))),
        }
    }
}

/// Every parameter consumed by the accountant formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    /// Dataset size.
    pub n: usize,
    /// Batch size.
    pub b: usize,
    /// Lipschitz constant `L` of each loss.
    pub lipschitz: f64,
    /// Smoothness `M`; absent for linear losses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    /// Strong-convexity modulus `m`, zero for merely convex losses.
    #[serde(default)]
    pub strong_convexity: f64,
    pub diameter: Diameter,
    pub stepsize: Stepsize,
    /// Noise multiplier; each step injects `N(0, η²σ²I)`.
    pub sigma: f64,
    pub iterations: usize,
    #[serde(default = "default_adjacency")]
    pub adjacency: Adjacency,
    /// Gradient-sensitivity override `Δ_g` (e.g. the unregularized Lipschitz
    /// bound for regularized losses).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
}

fn default_adjacency() -> Adjacency {
    Adjacency::Replace
}

impl PrivacyParams {
    /// Merely convex, replace adjacency, constant stepsize, no smoothness given.
    pub fn new(
        n: usize,
        b: usize,
        lipschitz: f64,
        diameter: f64,
        eta: f64,
        sigma: f64,
        iterations: usize,
    ) -> Self {
        PrivacyParams {
            n,
            b,
            lipschitz,
            smoothness: None,
            strong_convexity: 0.0,
            diameter: Diameter::Finite(diameter),
            stepsize: Stepsize::Constant(eta),
            sigma,
            iterations,
            adjacency: Adjacency::Replace,
            sensitivity: None,
        }
    }

    pub fn with_smoothness(mut self, m: f64) -> Self {
        self.smoothness = Some(m);
        self
    }

    pub fn with_strong_convexity(mut self, m: f64) -> Self {
        self.strong_convexity = m;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn with_adjacency(mut self, adjacency: Adjacency) -> Self {
        self.adjacency = adjacency;
        self
    }

    pub fn with_sensitivity(mut self, s: f64) -> Self {
        self.sensitivity = Some(s);
        self
    }

    pub fn with_stepsize(mut self, stepsize: Stepsize) -> Self {
        self.stepsize = stepsize;
        self
    }

    pub fn with_diameter(mut self, d: Diameter) -> Self {
        self.diameter = d;
        self
    }

    /// Subsampling probability `b/n`.
    pub fn sampling_rate(&self) -> f64 {
        self.b as f64 / self.n as f64
    }

    /// Effective gradient sensitivity: the override if present, otherwise
    /// `2L` under replace adjacency and `L` under remove adjacency.
    pub fn gradient_sensitivity(&self) -> f64 {
        self.sensitivity.unwrap_or(match self.adjacency {
            Adjacency::Replace => 2.0 * self.lipschitz,
            Adjacency::Remove => self.lipschitz,
        })
    }

    pub fn stepsize_schedule(&self) -> Vec<f64> {
        self.stepsize.schedule(self.iterations)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| PrivacyError::domain(format!("params JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Violation {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeAdmissibility {
    pub regime: Regime,
    pub admissible: bool,
    /// Why the regime's formula does not apply, when it does not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub regimes: Vec<RegimeAdmissibility>,
    /// Whether `σ > 8√2·L/b`, the noise floor under which the asymptotic
    /// `min{T, Dn/(Lη)}` rate is stated. The non-asymptotic formulas hold
    /// regardless.
    pub asymptotic_noise_floor: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn admissible(&self, regime: Regime) -> bool {
        self.regimes
            .iter()
            .any(|r| r.regime == regime && r.admissible)
    }

    pub fn reason(&self, regime: Regime) -> Option<&str> {
        self.regimes
            .iter()
            .find(|r| r.regime == regime)
            .and_then(|r| r.reason.as_deref())
    }
}

/// Check every parameter constraint and report which formulas apply.
/// Never fails; all problems are reported.
pub fn validate(p: &PrivacyParams) -> ValidationReport {
    let mut v = Vec::new();
    if p.n < 1 {
        v.push(Violation::new("n", "dataset size n must be at least 1"));
    }
    if p.b < 1 {
        v.push(Violation::new("b", "batch size b must be at least 1"));
    }
    if p.b > p.n {
        v.push(Violation::new(
            "b_le_n",
            format!("batch size must satisfy b ≤ n (b={}, n={})", p.b, p.n),
        ));
    }
    if !(p.lipschitz > 0.0 && p.lipschitz.is_finite()) {
        v.push(Violation::new("lipschitz", "Lipschitz constant L must be > 0"));
    }
    if let Some(m) = p.smoothness {
        if !(m > 0.0 && m.is_finite()) {
            v.push(Violation::new("smoothness", "smoothness M must be > 0"));
        }
    }
    if !(p.strong_convexity >= 0.0 && p.strong_convexity.is_finite()) {
        v.push(Violation::new(
            "strong_convexity",
            "strong convexity m must be ≥ 0",
        ));
    }
    if p.strong_convexity > 0.0 {
        match p.smoothness {
            Some(big_m) if p.strong_convexity > big_m => v.push(Violation::new(
                "m_le_M",
                format!(
                    "strong convexity must not exceed smoothness (m={}, M={big_m})",
                    p.strong_convexity
                ),
            )),
            _ => {}
        }
    }
    if let Diameter::Finite(d) = p.diameter {
        if !(d > 0.0 && d.is_finite()) {
            v.push(Violation::new("diameter", "diameter D must be > 0"));
        }
    }
    if !(p.sigma > 0.0 && p.sigma.is_finite()) {
        v.push(Violation::new("sigma", "noise multiplier σ must be > 0"));
    }
    if p.iterations < 1 {
        v.push(Violation::new("iterations", "iteration count T must be ≥ 1"));
    }
    if let Stepsize::Schedule(s) = &p.stepsize {
        if s.len() != p.iterations {
            v.push(Violation::new(
                "schedule_length",
                format!(
                    "stepsize schedule has {} entries but T = {}",
                    s.len(),
                    p.iterations
                ),
            ));
        }
    }
    let entries = p.stepsize.entries();
    if entries.is_empty() || entries.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        v.push(Violation::new("stepsize", "every stepsize must be > 0"));
    }
    if let Some(big_m) = p.smoothness.filter(|m| *m > 0.0) {
        let limit = 2.0 / big_m;
        if let Some(bad) = entries.iter().find(|&&e| e > limit) {
            v.push(Violation::new(
                "eta_le_2_over_M",
                format!(
                    "gradient-step contraction requires η ≤ 2/M (η={bad}, 2/M={limit})"
                ),
            ));
        }
    }
    if let Some(s) = p.sensitivity {
        if !(s > 0.0 && s.is_finite()) {
            v.push(Violation::new(
                "sensitivity",
                "gradient sensitivity Δ_g must be > 0",
            ));
        }
    }

    let regimes = Regime::ALL
        .iter()
        .map(|&r| {
            let reason = regime_obstacle(p, r);
            RegimeAdmissibility {
                regime: r,
                admissible: reason.is_none() && v.is_empty(),
                reason,
            }
        })
        .collect();

    let floor = 8.0 * std::f64::consts::SQRT_2 * p.lipschitz / p.b.max(1) as f64;
    ValidationReport {
        violations: v,
        regimes,
        asymptotic_noise_floor: p.sigma > floor,
    }
}

fn regime_obstacle(p: &PrivacyParams, r: Regime) -> Option<String> {
    let constant = p.stepsize.constant();
    match r {
        Regime::NoisySgd => constant
            .is_none()
            .then(|| "requires a constant stepsize".to_string()),
        Regime::FullBatch => {
            if p.b != p.n {
                Some(format!("requires b = n (b={}, n={})", p.b, p.n))
            } else if constant.is_none() {
                Some("requires a constant stepsize".into())
            } else {
                None
            }
        }
        Regime::Cyclic => {
            if p.b == 0 || p.n % p.b != 0 {
                Some(format!(
                    "requires b to divide n (b={}, n={}); pad the dataset to a multiple of b",
                    p.b, p.n
                ))
            } else if constant.is_none() {
                Some("requires a constant stepsize".into())
            } else {
                None
            }
        }
        Regime::StronglyConvex => {
            if p.strong_convexity <= 0.0 {
                Some("requires strong convexity m > 0".into())
            } else if p.smoothness.is_none() {
                Some("requires smoothness M".into())
            } else if let Some(eta) = constant {
                let big_m = p.smoothness.unwrap_or(f64::INFINITY);
                (eta >= 2.0 / big_m)
                    .then(|| "requires η < 2/M strictly so the contraction factor is < 1".into())
            } else {
                Some("requires a constant stepsize".into())
            }
        }
        Regime::NonuniformStepsize => (p.stepsize.schedule(p.iterations).len() != p.iterations)
            .then(|| "schedule length must equal T".into()),
    }
}

/// A deterministic pseudorandom stream: `(master_seed, stream_index)`
/// selects one of 2^64 independent ChaCha8 streams under the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeededStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        SeededStream {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// A child stream family keyed by this stream, for work split into
    /// independently seeded chunks.
    pub fn fork(&self, child: u64) -> SeededStream {
        SeededStream {
            master_seed: splitmix64(self.master_seed ^ splitmix64(self.stream_index)),
            stream_index: child,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenyiPoint {
    pub alpha: f64,
    pub epsilon: f64,
    /// Formula that produced the point.
    pub provenance: String,
}

/// `(α, ε_α)` points with strictly increasing `α`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenyiCurve {
    pub points: Vec<RenyiPoint>,
}

impl RenyiCurve {
    pub fn push(&mut self, alpha: f64, epsilon: f64, provenance: impl Into<String>) -> Result<()> {
        if !(alpha > 1.0) {
            return Err(PrivacyError::domain(format!("Rényi order must be > 1, got {alpha}")));
        }
        if !(epsilon >= 0.0) {
            return Err(PrivacyError::domain(format!("RDP bound must be ≥ 0, got {epsilon}")));
        }
        if let Some(last) = self.points.last() {
            if alpha <= last.alpha {
                return Err(PrivacyError::domain("Rényi orders must be strictly increasing"));
            }
        }
        self.points.push(RenyiPoint {
            alpha,
            epsilon,
            provenance: provenance.into(),
        });
        Ok(())
    }

    /// `(ε, δ)`-DP epsilon at each point.
    pub fn dp_points(&self, delta: f64) -> Result<Vec<(f64, f64)>> {
        self.points
            .iter()
            .map(|p| Ok((p.alpha, crate::accountant::rdp_to_dp(p.alpha, p.epsilon, delta)?)))
            .collect()
    }

    /// Smallest DP epsilon over the curve and the order attaining it.
    pub fn best_dp(&self, delta: f64) -> Result<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for (alpha, eps) in self.dp_points(delta)? {
            if best.is_none_or(|(e, _)| eps < e) {
                best = Some((eps, alpha));
            }
        }
        best.ok_or_else(|| PrivacyError::domain("empty Rényi curve"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn good() -> PrivacyParams {
        PrivacyParams::new(1000, 10, 1.0, 1.0, 0.05, 2.0, 100).with_smoothness(1.0)
    }

    #[test]
    fn batch_larger_than_dataset() {
        let mut p = good();
        p.n = 10;
        p.b = 20;
        let r = validate(&p);
        assert!(r.violations.iter().any(|v| v.code == "b_le_n"));
        assert!(!r.is_valid());
    }

    #[test]
    fn stepsize_above_contraction_limit() {
        let p = good().with_stepsize(Stepsize::Constant(3.0));
        let r = validate(&p);
        let v = r.violations.iter().find(|v| v.code == "eta_le_2_over_M").unwrap();
        assert!(v.message.contains("η ≤ 2/M"));
    }

    #[test]
    fn well_formed_params_are_valid() {
        let r = validate(&good());
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.admissible(Regime::NoisySgd));
        assert!(r.admissible(Regime::Cyclic));
        assert!(!r.admissible(Regime::FullBatch));
        assert!(!r.admissible(Regime::StronglyConvex));
    }

    #[test]
    fn validate_is_idempotent() {
        let mut p = good();
        p.sigma = -1.0;
        assert_eq!(validate(&p), validate(&p));
    }

    #[test]
    fn default_sensitivity_by_adjacency() {
        let p = good();
        assert_eq!(p.gradient_sensitivity(), 2.0);
        assert_eq!(p.clone().with_adjacency(Adjacency::Remove).gradient_sensitivity(), 1.0);
        assert_eq!(p.with_sensitivity(0.3).gradient_sensitivity(), 0.3);
    }

    #[test]
    fn schedule_length_mismatch() {
        let p = good().with_stepsize(Stepsize::Schedule(vec![0.1; 3]));
        assert!(validate(&p)
            .violations
            .iter()
            .any(|v| v.code == "schedule_length"));
    }

    #[test]
    fn params_json_round_trip_and_field_names() {
        let p = good()
            .with_diameter(Diameter::Unbounded)
            .with_stepsize(Stepsize::Schedule(vec![0.1, 0.2]));
        let s = p.to_json();
        for key in [
            "\"n\"", "\"b\"", "\"lipschitz\"", "\"smoothness\"", "\"strong_convexity\"",
            "\"diameter\"", "\"stepsize\"", "\"sigma\"", "\"iterations\"", "\"adjacency\"",
        ] {
            assert!(s.contains(key), "missing {key} in {s}");
        }
        assert!(s.contains("\"unbounded\""));
        assert_eq!(PrivacyParams::from_json(&s).unwrap(), p);

        let minimal = r#"{"n":10,"b":2,"lipschitz":1,"diameter":3,"stepsize":0.1,
                          "sigma":1,"iterations":5}"#;
        let q = PrivacyParams::from_json(minimal).unwrap();
        assert_eq!(q.adjacency, Adjacency::Replace);
        assert_eq!(q.diameter, Diameter::Finite(3.0));
        assert_eq!(q.stepsize_schedule(), vec![0.1; 5]);
    }

    #[test]
    fn seeded_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = SeededStream::new(7, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SeededStream::new(7, 3).rng();
            (0..8).map(|_| r.random()).collect()
        };
        let c: Vec<u64> = {
            let mut r = SeededStream::new(7, 4).rng();
            (0..8).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(SeededStream::new(7, 3).fork(0), SeededStream::new(7, 4).fork(0));
    }

    #[test]
    fn curve_rejects_unordered_orders() {
        let mut c = RenyiCurve::default();
        c.push(2.0, 0.1, "x").unwrap();
        assert!(c.push(2.0, 0.2, "x").is_err());
        assert!(c.push(1.5, 0.2, "x").is_err());
        c.push(4.0, 0.3, "x").unwrap();
        let (eps, alpha) = c.best_dp(1e-5).unwrap();
        assert_eq!(alpha, 4.0);
        assert!((eps - (0.3 + (1e5f64).ln() / 3.0)).abs() < 1e-12);
    }
}
