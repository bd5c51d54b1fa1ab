use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{PrivacyError, Result};

/// Closed convex constraint set with Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    Ball {
        #[serde(with = "super::plain::vector")]
        center: DVector<f64>,
        radius: f64,
    },
    Box {
        #[serde(with = "super::plain::vector")]
        lo: DVector<f64>,
        #[serde(with = "super::plain::vector")]
        hi: DVector<f64>,
    },
}

impl ConstraintSet {
    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(PrivacyError::domain("ball radius must be > 0"));
        }
        Ok(ConstraintSet::Ball { center, radius })
    }

    pub fn cube(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(PrivacyError::domain("box bounds differ in dimension"));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(PrivacyError::domain("box needs lo ≤ hi in every coordinate"));
        }
        Ok(ConstraintSet::Box { lo, hi })
    }

    /// The interval `[−D/2, D/2]`.
    pub fn interval(diameter: f64) -> Result<Self> {
        let h = 0.5 * diameter;
        ConstraintSet::cube(DVector::from_element(1, -h), DVector::from_element(1, h))
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Ball { center, .. } => center.len(),
            ConstraintSet::Box { lo, .. } => lo.len(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ConstraintSet::Ball { radius, .. } => 2.0 * radius,
            ConstraintSet::Box { lo, hi } => (hi - lo).norm(),
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(PrivacyError::domain(format!(
                "point has dimension {} but the set has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match self {
            ConstraintSet::Ball { center, radius } => {
                let r = x - center;
                let norm = r.norm();
                if norm <= *radius {
                    x.clone()
                } else {
                    center + r * (*radius / norm)
                }
            }
            ConstraintSet::Box { lo, hi } => DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i])),
        })
    }

    /// Whether `x` lies in the set up to `tol`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self.project(x) {
            Ok(p) => (p - x).norm() <= tol,
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn projection_examples() {
        let ball = ConstraintSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(ball.project(&v(&[2.0, 0.0])).unwrap(), v(&[1.0, 0.0]));
        assert_eq!(ball.project(&v(&[0.3, -0.2])).unwrap(), v(&[0.3, -0.2]));
        let cube = ConstraintSet::cube(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(cube.project(&v(&[3.0, -5.0])).unwrap(), v(&[1.0, -1.0]));
        assert!(cube.project(&v(&[1.0])).is_err());
    }

    #[test]
    fn diameters() {
        assert_eq!(ConstraintSet::ball(v(&[1.0]), 2.5).unwrap().diameter(), 5.0);
        let cube = ConstraintSet::cube(v(&[0.0, 0.0]), v(&[3.0, 4.0])).unwrap();
        assert_eq!(cube.diameter(), 5.0);
        assert_eq!(ConstraintSet::interval(10.0).unwrap().diameter(), 10.0);
    }
}
