use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PrivacyError, Result};

/// Per-record convex loss with an analytic gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    Zero { dim: usize },
    /// `f(ω) = ⟨g, ω⟩`.
    Linear {
        #[serde(with = "super::plain::vector")]
        gradient: DVector<f64>,
    },
    /// `f(ω) = ½(ω − c)ᵀA(ω − c)` with `A` symmetric positive semidefinite.
    Quadratic {
        #[serde(with = "super::plain::vector")]
        center: DVector<f64>,
        #[serde(with = "super::plain::matrix")]
        curvature: DMatrix<f64>,
    },
    /// `f(ω) = ln(1 + exp(−y⟨x, ω⟩))`.
    Logistic {
        #[serde(with = "super::plain::vector")]
        feature: DVector<f64>,
        label: f64,
    },
}

impl LossSpec {
    pub fn linear(gradient: DVector<f64>) -> Self {
        LossSpec::Linear { gradient }
    }

    pub fn quadratic(center: DVector<f64>, curvature: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if curvature.nrows() != d || curvature.ncols() != d {
            return Err(PrivacyError::domain("curvature must be a d×d matrix"));
        }
        if (&curvature - curvature.transpose()).amax() > 1e-12 * curvature.amax().max(1.0) {
            return Err(PrivacyError::domain("curvature must be symmetric"));
        }
        Ok(LossSpec::Quadratic { center, curvature })
    }

    pub fn logistic(feature: DVector<f64>, label: f64) -> Result<Self> {
        if label != 1.0 && label != -1.0 {
            return Err(PrivacyError::domain("logistic label must be ±1"));
        }
        Ok(LossSpec::Logistic { feature, label })
    }

    /// Quadratic with uniformly random eigenbasis and eigenvalues drawn from
    /// `[m, big_m]`, both endpoints included.
    pub fn random_quadratic<R: Rng>(dim: usize, m: f64, big_m: f64, rng: &mut R) -> Self {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
        let basis = g.qr().q();
        let mut eig: Vec<f64> = (0..dim).map(|_| rng.random_range(m..=big_m)).collect();
        eig[0] = m;
        if dim > 1 {
            eig[dim - 1] = big_m;
        }
        let a: DMatrix<f64> = &basis * DMatrix::from_diagonal(&DVector::from_vec(eig)) * basis.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let center = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        LossSpec::Quadratic { center, curvature: a }
    }

    pub fn dim(&self) -> usize {
        match self {
            LossSpec::Zero { dim } => *dim,
            LossSpec::Linear { gradient } => gradient.len(),
            LossSpec::Quadratic { center, .. } => center.len(),
            LossSpec::Logistic { feature, .. } => feature.len(),
        }
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        match self {
            LossSpec::Zero { .. } => 0.0,
            LossSpec::Linear { gradient } => gradient.dot(w),
            LossSpec::Quadratic { center, curvature } => {
                let r = w - center;
                0.5 * r.dot(&(curvature * &r))
            }
            LossSpec::Logistic { feature, label } => {
                let z = -label * feature.dot(w);
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            LossSpec::Zero { dim } => DVector::zeros(*dim),
            LossSpec::Linear { gradient } => gradient.clone(),
            LossSpec::Quadratic { center, curvature } => curvature * (w - center),
            LossSpec::Logistic { feature, label } => {
                let z = -label * feature.dot(w);
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                feature * (-label * s)
            }
        }
    }

    /// Curvature range `(m, M)`: extreme Hessian eigenvalues (global bounds
    /// for the logistic loss).
    pub fn curvature_range(&self) -> (f64, f64) {
        match self {
            LossSpec::Zero { .. } | LossSpec::Linear { .. } => (0.0, 0.0),
            LossSpec::Quadratic { curvature, .. } => {
                let e = SymmetricEigen::new(curvature.clone()).eigenvalues;
                (e.min(), e.max())
            }
            LossSpec::Logistic { feature, .. } => (0.0, 0.25 * feature.norm_squared()),
        }
    }
}
