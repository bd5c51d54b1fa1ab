//! Rényi-DP accounting for noisy (stochastic) gradient descent on convex
//! losses over bounded domains, with a reference optimizer and a randomized
//! lower-bound audit.

pub mod accountant;
pub mod cli;
pub mod error;
pub mod lowerbound;
pub mod optimizer;
pub mod pabi;
pub mod quadrature;
pub mod renyi;
pub mod types;

pub use accountant::{
    best_dp, rdp_to_dp, solve_sigma, AccountRequest, AccountResult, Accountant, Branch,
};
pub use error::{PrivacyError, Result};
pub use renyi::{alpha_star, gaussian_renyi, sgm_divergence, sgm_divergence_mc, QuadratureConfig, SgmQuery};
pub use types::{
    validate, Adjacency, Diameter, PrivacyParams, Regime, RenyiCurve, RenyiPoint, SeededStream,
    Stepsize, ValidationReport, Violation,
};
