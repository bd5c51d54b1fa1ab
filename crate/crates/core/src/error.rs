use thiserror::Error;

use crate::types::Violation;

pub type Result<T> = std::result::Result<T, PrivacyError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrivacyError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters failed validation; carries every violated constraint.
    #[error("invalid parameters: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (last refinements {previous:e}, {last:e})"
    )]
    Quadrature {
        subdivisions: usize,
        previous: f64,
        last: f64,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// No noise level up to the search limit meets the requested budget.
    #[error("infeasible budget: {0}")]
    Infeasible(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

impl PrivacyError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        PrivacyError::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        PrivacyError::Numerical(msg.into())
    }
}
