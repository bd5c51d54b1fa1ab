//! `nsgd-privacy` command-line front end.
//!
//! Noise convention: `--params` files give `sigma` such that each step adds
//! `N(0, η²σ²I)`. A per-step standard deviation `s` corresponds to
//! `σ = s/η`; a noise multiplier `z` on a summed, clipped batch gradient with
//! clip norm `C` corresponds to `σ = zC/b`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 budget
//! unreachable.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::accountant::{rdp_to_dp, solve_sigma, AccountRequest, Accountant};
use crate::error::PrivacyError;
use crate::lowerbound::{refute_dp, simulate_walks, simulate_walks_unchecked, rdp_refutation_scale, WalkParams};
use crate::optimizer::{BatchMode, Problem};
use crate::types::{PrivacyParams, Regime, SeededStream};

#[derive(Debug, Parser)]
#[command(name = "nsgd-privacy", version, about = "Rényi-DP accounting for noisy SGD on convex losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the RDP budget for one order as JSON.
    ComputeEpsilon {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        regime: Regime,
        #[arg(long)]
        alpha: f64,
        /// Also report the (ε, δ)-DP epsilon.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// RDP budget over a grid of iteration counts as CSV.
    PrivacyCurve {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        regime: Regime,
        #[arg(long)]
        alpha: f64,
        /// Comma-separated counts or `geom:lo:hi:points`.
        #[arg(long)]
        t_grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest σ meeting an RDP budget.
    SolveSigma {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        regime: Regime,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run projected noisy SGD and write the trajectory as CSV.
    RunSgd {
        #[arg(long)]
        params: PathBuf,
        /// JSON with `losses`, `set` and optional `initial`; defaults to the
        /// one-dimensional lower-bound instance.
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Batches::Uniform)]
        batches: Batches,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo audit of the lower-bound construction as JSON.
    Audit {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        replicas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Report violated construction hypotheses instead of failing.
        #[arg(long)]
        allow_precondition_violations: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Batches {
    Uniform,
    Cyclic,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Privacy(PrivacyError),
}

impl From<PrivacyError> for Failure {
    fn from(e: PrivacyError) -> Self {
        Failure::Privacy(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Privacy(PrivacyError::Validation(_) | PrivacyError::Domain(_)) => 2,
            Failure::Privacy(PrivacyError::Quadrature { .. } | PrivacyError::Numerical(_)) => 3,
            Failure::Privacy(PrivacyError::Infeasible(_)) => 4,
        }
    }

    fn report(&self) -> String {
        match self {
            Failure::Input(m) => m.clone(),
            Failure::Privacy(PrivacyError::Validation(v)) => {
                let mut s = String::from("invalid parameters:");
                for x in v {
                    s.push_str(&format!("\n  [{}] {}", x.code, x.message));
                }
                s
            }
            Failure::Privacy(e) => e.to_string(),
        }
    }
}

fn load_params(path: &PathBuf) -> Result<PrivacyParams, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(PrivacyParams::from_json(&text)?)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|e| Failure::Input(format!("cannot write output: {e}")))
        }
    }
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Parse `1,5,10` or `geom:lo:hi:points` into a strictly ascending list.
pub fn parse_t_grid(spec: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("bad --t-grid {spec:?}: expected a comma list or geom:lo:hi:points");
    let mut grid: Vec<usize> = if let Some(rest) = spec.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(lo >= 1.0 && hi >= lo) || points == 0 {
            return Err(bad());
        }
        if points == 1 {
            vec![lo.round() as usize]
        } else {
            let ratio = (hi / lo).ln() / (points - 1) as f64;
            (0..points)
                .map(|i| (lo * (ratio * i as f64).exp()).round() as usize)
                .collect()
        }
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if grid.iter().any(|&t| t == 0) {
        return Err("iteration counts must be ≥ 1".into());
    }
    if !spec.starts_with("geom:") && grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("iteration grid must be strictly ascending".into());
    }
    grid.dedup();
    Ok(grid)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::ComputeEpsilon {
            params,
            regime,
            alpha,
            delta,
            out,
        } => {
            let p = load_params(&params)?;
            let acc = Accountant::default();
            let r = acc.epsilon(&AccountRequest::new(p, alpha, regime))?;
            let mut v = serde_json::to_value(&r).expect("serializable");
            v["regime"] = json!(regime.name());
            v["alpha"] = json!(alpha);
            if let Some(d) = delta {
                v["delta"] = json!(d);
                v["epsilon_dp"] = json!(rdp_to_dp(alpha, r.epsilon, d)?);
            }
            emit(&out, &to_json(&v))
        }
        Command::PrivacyCurve {
            params,
            regime,
            alpha,
            t_grid,
            out,
        } => {
            let p = load_params(&params)?;
            let grid = parse_t_grid(&t_grid).map_err(Failure::Input)?;
            let acc = Accountant::default();
            let rows = acc.privacy_curve(&p, regime, alpha, &grid)?;
            let mut wtr = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Failure::Input(format!("CSV write failed: {e}"));
            wtr.write_record(["T", "epsilon", "branch"]).map_err(io)?;
            for (t, r) in rows {
                let branch = serde_json::to_value(r.branch).expect("serializable");
                wtr.write_record([
                    t.to_string(),
                    format!("{:?}", r.epsilon),
                    branch.as_str().unwrap_or_default().to_string(),
                ])
                .map_err(io)?;
            }
            let bytes = wtr.into_inner().map_err(|e| Failure::Input(e.to_string()))?;
            emit(&out, &String::from_utf8(bytes).expect("utf-8 CSV"))
        }
        Command::SolveSigma {
            params,
            regime,
            alpha,
            epsilon,
            out,
        } => {
            let p = load_params(&params)?;
            let acc = Accountant::default();
            let sigma = solve_sigma(&acc, &p, regime, alpha, epsilon)?;
            let achieved = acc.epsilon(&AccountRequest::new(p.with_sigma(sigma), alpha, regime))?;
            let v = json!({
                "sigma": sigma,
                "regime": regime.name(),
                "alpha": alpha,
                "budget": epsilon,
                "epsilon": achieved.epsilon,
                "branch": achieved.branch,
            });
            emit(&out, &to_json(&v))
        }
        Command::RunSgd {
            params,
            problem,
            batches,
            seed,
            out,
        } => {
            let p = load_params(&params)?;
            let pr = match problem {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
                    Problem::from_json(&text).map_err(|e| Failure::Input(format!("bad problem file: {e}")))?
                }
                None => {
                    let d = p
                        .diameter
                        .finite()
                        .ok_or_else(|| Failure::Input("the default problem needs a finite diameter".into()))?;
                    Problem::lower_bound(p.n, p.lipschitz, d)?
                }
            };
            let mode = match batches {
                Batches::Uniform => BatchMode::UniformSubset,
                Batches::Cyclic => BatchMode::Cyclic,
            };
            let traj = pr.run(&p, mode, SeededStream::new(seed, 0))?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            emit(&out, &String::from_utf8(buf).expect("utf-8 CSV"))
        }
        Command::Audit {
            params,
            replicas,
            seed,
            epsilon,
            delta,
            allow_precondition_violations,
            out,
        } => {
            let p = load_params(&params)?;
            let wp = WalkParams::from_params(&p)?;
            let stream = SeededStream::new(seed, 0);
            let report = if allow_precondition_violations {
                simulate_walks_unchecked(&wp, replicas, stream)?
            } else {
                simulate_walks(&wp, replicas, stream)?
            };
            let mut v = serde_json::to_value(&report).expect("serializable");
            v["epsilon"] = json!(epsilon);
            v["delta"] = json!(delta);
            v["delta_hat"] = json!(report.delta_hat(epsilon));
            v["verdict"] = serde_json::to_value(refute_dp(&report, epsilon, delta)).expect("serializable");
            v["rdp_refutation_scale"] = json!(rdp_refutation_scale(&wp));
            emit(&out, &to_json(&v))
        }
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.report());
            f.exit_code()
        }
    }
}
