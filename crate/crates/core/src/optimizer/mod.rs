//! Projected noisy gradient descent on convex per-record losses:
//! `ω ← Π_K[ω − η_t(G_t + Z_t)]` with `G_t` the batch-average gradient and
//! `Z_t ~ N(0, σ²I)`.

mod constraint;
mod loss;
mod plain;

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PrivacyError, Result};
use crate::types::{validate, PrivacyParams, SeededStream};

pub use constraint::ConstraintSet;
pub use loss::LossSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// A uniformly random `b`-subset, drawn without replacement.
    UniformSubset,
    /// Round robin: step `t` uses indices `t·b, …, t·b + b − 1` modulo `n`.
    Cyclic,
}

/// Indices (0-based) used at step `step`, sorted.
pub fn sample_batch<R: Rng>(n: usize, b: usize, mode: BatchMode, step: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = match mode {
        BatchMode::UniformSubset => rand::seq::index::sample(rng, n, b).into_vec(),
        BatchMode::Cyclic => (0..b).map(|j| (step * b + j) % n).collect(),
    };
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `ω_0, …, ω_T`.
    #[serde(with = "plain::vectors")]
    pub iterates: Vec<DVector<f64>>,
    pub batch_log: Vec<Vec<usize>>,
    pub seed: SeededStream,
}

impl Trajectory {
    pub fn final_iterate(&self) -> &DVector<f64> {
        self.iterates.last().expect("trajectory holds ω_0")
    }

    /// CSV with columns `step, w0, …, w{d−1}, batch`; the batch column lists
    /// the indices used to reach that iterate, separated by `;`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.iterates.first().map_or(0, |w| w.len());
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend((0..d).map(|i| format!("w{i}")));
        header.push("batch".into());
        let io = |e: csv::Error| PrivacyError::numerical(format!("CSV write failed: {e}"));
        wtr.write_record(&header).map_err(io)?;
        for (t, w) in self.iterates.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(w.iter().map(|x| format!("{x:?}")));
            let batch = if t == 0 {
                String::new()
            } else {
                self.batch_log[t - 1].iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
            };
            row.push(batch);
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush().map_err(|e| PrivacyError::numerical(format!("CSV write failed: {e}")))?;
        Ok(())
    }
}

/// Per-record losses, a constraint set and a start point (the origin when
/// absent): the input format of the `run-sgd` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub losses: Vec<LossSpec>,
    pub set: ConstraintSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl Problem {
    /// The one-dimensional lower-bound instance on `[−D/2, D/2]`: `n − 1`
    /// zero losses and a last record with constant gradient `−L`.
    pub fn lower_bound(n: usize, lipschitz: f64, diameter: f64) -> Result<Self> {
        let mut losses = vec![LossSpec::Zero { dim: 1 }; n];
        if let Some(last) = losses.last_mut() {
            *last = LossSpec::linear(DVector::from_element(1, -lipschitz));
        }
        Ok(Problem {
            losses,
            set: ConstraintSet::interval(diameter)?,
            initial: None,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| PrivacyError::domain(format!("problem JSON: {e}")))
    }

    pub fn initial_point(&self) -> DVector<f64> {
        match &self.initial {
            Some(w) => DVector::from_column_slice(w),
            None => DVector::zeros(self.set.dim()),
        }
    }

    pub fn run(&self, params: &PrivacyParams, mode: BatchMode, stream: SeededStream) -> Result<Trajectory> {
        run_noisy_sgd(&self.losses, &self.set, params, mode, &self.initial_point(), stream)
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Average gradient of the losses indexed by `batch` at `w`.
pub fn batch_gradient(losses: &[LossSpec], batch: &[usize], w: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(w.len());
    for &i in batch {
        g += losses[i].gradient(w);
    }
    g / batch.len() as f64
}

/// Run `params.iterations` projected noisy steps from `initial`. `σ = 0`
/// gives plain projected gradient descent.
pub fn run_noisy_sgd(
    losses: &[LossSpec],
    set: &ConstraintSet,
    params: &PrivacyParams,
    mode: BatchMode,
    initial: &DVector<f64>,
    stream: SeededStream,
) -> Result<Trajectory> {
    // σ = 0 is meaningless for accounting but a valid noiseless reference run.
    let violations: Vec<_> = validate(params)
        .violations
        .into_iter()
        .filter(|v| !(v.code == "sigma" && params.sigma == 0.0))
        .collect();
    if !violations.is_empty() {
        return Err(PrivacyError::Validation(violations));
    }
    if losses.len() != params.n {
        return Err(PrivacyError::domain(format!(
            "{} losses supplied but n = {}",
            losses.len(),
            params.n
        )));
    }
    let d = set.dim();
    if initial.len() != d || losses.iter().any(|f| f.dim() != d) {
        return Err(PrivacyError::domain("losses, initial point and constraint set differ in dimension"));
    }
    let etas = params.stepsize_schedule();
    let mut rng = stream.rng();
    let mut w = set.project(initial)?;
    let mut iterates = Vec::with_capacity(params.iterations + 1);
    let mut batch_log = Vec::with_capacity(params.iterations);
    iterates.push(w.clone());
    for (t, &eta) in etas.iter().enumerate() {
        let batch = sample_batch(params.n, params.b, mode, t, &mut rng);
        let g = batch_gradient(losses, &batch, &w);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(PrivacyError::numerical(format!("non-finite gradient at step {t}")));
        }
        let noise = DVector::from_fn(d, |_, _| params.sigma * gaussian(&mut rng));
        w = set.project(&(&w - (g + noise) * eta))?;
        iterates.push(w.clone());
        batch_log.push(batch);
    }
    Ok(Trajectory {
        iterates,
        batch_log,
        seed: stream,
    })
}

/// Largest observed `‖φ(x) − φ(y)‖/‖x − y‖` for the gradient step
/// `φ(ω) = ω − η·(average gradient of losses)` over random point pairs.
pub fn contraction_check_batch(losses: &[LossSpec], eta: f64, trials: usize, stream: SeededStream) -> f64 {
    let Some(d) = losses.first().map(|f| f.dim()) else {
        return 0.0;
    };
    let all: Vec<usize> = (0..losses.len()).collect();
    let phi = |w: &DVector<f64>| w - batch_gradient(losses, &all, w) * eta;
    let mut rng = stream.rng();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let scale = 10f64.powf(rng.random_range(-3.0..2.0));
        let x = DVector::from_fn(d, |_, _| scale * gaussian(&mut rng));
        let y = DVector::from_fn(d, |_, _| scale * gaussian(&mut rng));
        let gap = (&x - &y).norm();
        if gap > 0.0 {
            worst = worst.max((phi(&x) - phi(&y)).norm() / gap);
        }
    }
    worst
}

pub fn contraction_check(loss: &LossSpec, eta: f64, trials: usize, stream: SeededStream) -> f64 {
    contraction_check_batch(std::slice::from_ref(loss), eta, trials, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn problem_json_uses_plain_arrays() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let f = LossSpec::quadratic(DVector::from_vec(vec![1.0, -1.0]), a).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"kind":"quadratic","center":[1.0,-1.0],"curvature":[[2.0,1.0],[1.0,3.0]]}"#);
        assert_eq!(serde_json::from_str::<LossSpec>(&text).unwrap(), f);
        let set: ConstraintSet = serde_json::from_str(r#"{"kind":"box","lo":[0.0],"hi":[2.0]}"#).unwrap();
        assert_eq!(set, ConstraintSet::cube(DVector::from_vec(vec![0.0]), DVector::from_vec(vec![2.0])).unwrap());
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"quadratic","center":[0.0],"curvature":[[1.0],[]]}"#).is_err());
    }

    #[test]
    fn cyclic_batches_round_robin() {
        let mut rng = SeededStream::new(0, 0).rng();
        let got: Vec<Vec<usize>> = (0..4).map(|t| sample_batch(6, 2, BatchMode::Cyclic, t, &mut rng)).collect();
        assert_eq!(got, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![0, 1]]);
    }

    #[test]
    fn full_uniform_batch_is_everything() {
        let mut rng = SeededStream::new(1, 0).rng();
        for t in 0..5 {
            assert_eq!(sample_batch(5, 5, BatchMode::UniformSubset, t, &mut rng), vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn contraction_examples() {
        let lin = LossSpec::linear(DVector::from_vec(vec![1.0, 2.0]));
        let r = contraction_check(&lin, 0.5, 200, SeededStream::new(2, 0));
        assert!((r - 1.0).abs() < 1e-12);
        let q = LossSpec::quadratic(DVector::from_vec(vec![1.0, -1.0]), DMatrix::identity(2, 2)).unwrap();
        assert!(contraction_check(&q, 1.0, 200, SeededStream::new(2, 1)) < 1e-12);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0]));
        let q = LossSpec::quadratic(DVector::zeros(2), a).unwrap();
        assert!(contraction_check(&q, 0.8, 500, SeededStream::new(2, 2)) <= 0.6 + 1e-10);
    }

    #[test]
    fn csv_export_layout() {
        let traj = Trajectory {
            iterates: vec![DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![0.5, 0.25])],
            batch_log: vec![vec![2, 7]],
            seed: SeededStream::new(0, 0),
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,w0,w1,batch\n0,0.0,1.0,\n1,0.5,0.25,2;7\n");
    }
}
