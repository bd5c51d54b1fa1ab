//! Python bindings. Results that are records on the Rust side come back as
//! plain dicts and lists.

use noisy_sgd_privacy::accountant::{best_dp, rdp_to_dp, solve_sigma, AccountRequest, Accountant};
use noisy_sgd_privacy::lowerbound::{
    rdp_refutation_scale, refute_dp, simulate_walks, simulate_walks_unchecked, WalkParams,
};
use noisy_sgd_privacy::optimizer::{BatchMode, Problem};
use noisy_sgd_privacy::{
    Adjacency, Diameter, PrivacyError, PrivacyParams, QuadratureConfig, Regime, SeededStream, SgmQuery, Stepsize,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

create_exception!(noisy_sgd_privacy, InfeasibleError, PyValueError, "No σ meets the requested budget.");

fn py_err(e: PrivacyError) -> PyErr {
    match e {
        PrivacyError::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        PrivacyError::Quadrature { .. } | PrivacyError::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        PrivacyError::Validation(_) | PrivacyError::Domain(_) => PyValueError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn regime(name: &str) -> PyResult<Regime> {
    name.parse().map_err(py_err)
}

#[derive(FromPyObject)]
enum StepsizeArg {
    Constant(f64),
    Schedule(Vec<f64>),
}

/// Accountant parameters. `diameter=None` means an unbounded domain and
/// `eta` may be a float or a per-step list.
#[pyclass(name = "PrivacyParams", module = "noisy_sgd_privacy")]
struct Params {
    inner: PrivacyParams,
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (n, b, lipschitz, diameter, eta, sigma, iterations, *, smoothness=None, strong_convexity=0.0, adjacency="replace", sensitivity=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        b: usize,
        lipschitz: f64,
        diameter: Option<f64>,
        eta: StepsizeArg,
        sigma: f64,
        iterations: usize,
        smoothness: Option<f64>,
        strong_convexity: f64,
        adjacency: &str,
        sensitivity: Option<f64>,
    ) -> PyResult<Self> {
        let adjacency = match adjacency {
            "replace" => Adjacency::Replace,
            "remove" => Adjacency::Remove,
            other => return Err(PyValueError::new_err(format!("unknown adjacency {other:?}"))),
        };
        Ok(Params {
            inner: PrivacyParams {
                n,
                b,
                lipschitz,
                smoothness,
                strong_convexity,
                diameter: diameter.map_or(Diameter::Unbounded, Diameter::Finite),
                stepsize: match eta {
                    StepsizeArg::Constant(e) => Stepsize::Constant(e),
                    StepsizeArg::Schedule(s) => Stepsize::Schedule(s),
                },
                sigma,
                iterations,
                adjacency,
                sensitivity,
            },
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        PrivacyParams::from_json(text).map(|inner| Params { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Copy with a different noise multiplier.
    fn with_sigma(&self, sigma: f64) -> Self {
        Params {
            inner: self.inner.clone().with_sigma(sigma),
        }
    }

    fn with_iterations(&self, iterations: usize) -> Self {
        Params {
            inner: self.inner.clone().with_iterations(iterations),
        }
    }

    /// Violations and per-regime admissibility as a dict.
    fn validate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &noisy_sgd_privacy::validate(&self.inner))
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn sampling_rate(&self) -> f64 {
        self.inner.sampling_rate()
    }

    fn __repr__(&self) -> String {
        format!("PrivacyParams({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// RDP budget at order `alpha`; with `delta`, also the (ε, δ)-DP epsilon.
#[pyfunction]
#[pyo3(signature = (params, regime, alpha, delta=None))]
fn compute_epsilon(
    py: Python<'_>,
    params: PyRef<'_, Params>,
    regime: &str,
    alpha: f64,
    delta: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let reg = self::regime(regime)?;
    let r = Accountant::default()
        .epsilon(&AccountRequest::new(params.inner.clone(), alpha, reg))
        .map_err(py_err)?;
    let mut v = serde_json::to_value(&r).expect("serializable");
    v["regime"] = json!(reg.name());
    v["alpha"] = json!(alpha);
    if let Some(d) = delta {
        v["delta"] = json!(d);
        v["epsilon_dp"] = json!(rdp_to_dp(alpha, r.epsilon, d).map_err(py_err)?);
    }
    to_py(py, &v)
}

/// One dict per iteration count in `t_grid` (strictly ascending).
#[pyfunction]
fn privacy_curve(
    py: Python<'_>,
    params: PyRef<'_, Params>,
    regime: &str,
    alpha: f64,
    t_grid: Vec<usize>,
) -> PyResult<Py<PyAny>> {
    let rows = Accountant::default()
        .privacy_curve(&params.inner, self::regime(regime)?, alpha, &t_grid)
        .map_err(py_err)?;
    let rows: Vec<Value> = rows
        .into_iter()
        .map(|(t, r)| {
            let mut v = serde_json::to_value(&r).expect("serializable");
            v["iterations"] = json!(t);
            v
        })
        .collect();
    to_py(py, &rows)
}

/// Smallest σ whose order-`alpha` budget is at most `epsilon`.
#[pyfunction(name = "solve_sigma")]
fn solve_sigma_py(params: PyRef<'_, Params>, regime: &str, alpha: f64, epsilon: f64) -> PyResult<f64> {
    solve_sigma(&Accountant::default(), &params.inner, self::regime(regime)?, alpha, epsilon).map_err(py_err)
}

/// `(epsilon_dp, alpha)` minimizing the converted budget over `alphas`.
#[pyfunction(name = "best_dp")]
fn best_dp_py(params: PyRef<'_, Params>, regime: &str, delta: f64, alphas: Vec<f64>) -> PyResult<(f64, f64)> {
    best_dp(&Accountant::default(), &params.inner, self::regime(regime)?, delta, &alphas).map_err(py_err)
}

#[pyfunction(name = "rdp_to_dp")]
fn rdp_to_dp_py(alpha: f64, epsilon: f64, delta: f64) -> PyResult<f64> {
    rdp_to_dp(alpha, epsilon, delta).map_err(py_err)
}

/// Rényi divergence of the subsampled Gaussian mixture.
#[pyfunction]
fn sgm_divergence(q: f64, sigma: f64, alpha: f64) -> PyResult<f64> {
    let query = SgmQuery::new(q, sigma, alpha).map_err(py_err)?;
    noisy_sgd_privacy::sgm_divergence(query, &QuadratureConfig::default()).map_err(py_err)
}

#[pyfunction]
fn gaussian_renyi(mean_shift: f64, sigma: f64, alpha: f64) -> PyResult<f64> {
    noisy_sgd_privacy::gaussian_renyi(mean_shift, sigma, alpha).map_err(py_err)
}

/// Trajectory of projected noisy SGD as `{"iterates", "batch_log", "seed"}`.
/// `problem` is a JSON string; without it the lower-bound instance is used.
#[pyfunction]
#[pyo3(signature = (params, problem=None, batches="uniform", seed=0))]
fn run_noisy_sgd(
    py: Python<'_>,
    params: PyRef<'_, Params>,
    problem: Option<&str>,
    batches: &str,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let p = &params.inner;
    let pr = match problem {
        Some(text) => Problem::from_json(text).map_err(py_err)?,
        None => {
            let d = p
                .diameter
                .finite()
                .ok_or_else(|| PyValueError::new_err("the default problem needs a finite diameter"))?;
            Problem::lower_bound(p.n, p.lipschitz, d).map_err(py_err)?
        }
    };
    let mode = match batches {
        "uniform" => BatchMode::UniformSubset,
        "cyclic" => BatchMode::Cyclic,
        other => return Err(PyValueError::new_err(format!("unknown batch mode {other:?}"))),
    };
    let traj = py.detach(|| pr.run(p, mode, SeededStream::new(seed, 0))).map_err(py_err)?;
    to_py(py, &traj)
}

/// Monte-Carlo audit of the lower-bound walks for `params`, with the
/// verdict against the claimed `(epsilon, delta)`.
#[pyfunction]
#[pyo3(signature = (params, replicas, epsilon, delta, seed=0, allow_precondition_violations=false))]
fn audit(
    py: Python<'_>,
    params: PyRef<'_, Params>,
    replicas: usize,
    epsilon: f64,
    delta: f64,
    seed: u64,
    allow_precondition_violations: bool,
) -> PyResult<Py<PyAny>> {
    let wp = WalkParams::from_params(&params.inner).map_err(py_err)?;
    let stream = SeededStream::new(seed, 0);
    let report = py
        .detach(|| {
            if allow_precondition_violations {
                simulate_walks_unchecked(&wp, replicas, stream)
            } else {
                simulate_walks(&wp, replicas, stream)
            }
        })
        .map_err(py_err)?;
    let mut v = serde_json::to_value(&report).expect("serializable");
    v["epsilon"] = json!(epsilon);
    v["delta"] = json!(delta);
    v["delta_hat"] = json!(report.delta_hat(epsilon));
    v["verdict"] = serde_json::to_value(refute_dp(&report, epsilon, delta)).expect("serializable");
    v["rdp_refutation_scale"] = json!(rdp_refutation_scale(&wp));
    to_py(py, &v)
}

#[pymodule]
#[pyo3(name = "noisy_sgd_privacy")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_function(wrap_pyfunction!(compute_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(privacy_curve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sigma_py, m)?)?;
    m.add_function(wrap_pyfunction!(best_dp_py, m)?)?;
    m.add_function(wrap_pyfunction!(rdp_to_dp_py, m)?)?;
    m.add_function(wrap_pyfunction!(sgm_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_renyi, m)?)?;
    m.add_function(wrap_pyfunction!(run_noisy_sgd, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    Ok(())
}
