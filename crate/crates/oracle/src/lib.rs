//! Exact, enumeration-based verification of the probabilistic derivations
//! behind the training objectives, on finite joints over single-token
//! "sentences" in three languages.

pub mod checks;
pub mod joint;
pub mod suite;

pub use checks::{
    agreement_identity_gap, check_structural_identities, elbo_aux, elbo_mono, elbo_mono_decomposed,
    exact_marginal_loglik, marginal_loglik_direct, posterior_yz, posterior_z_given_x,
    posterior_z_given_y, supervised_decomposition_check, AgreementGap, AuxBound, Decomposition,
    StructuralReport, SupervisedReport,
};
pub use joint::{CondTable, Joint, ToyJoint, MAX_SUPPORT};
pub use suite::{run_suite, CheckReport, CORRECTION_FLOOR, PERTURBATION_FLOOR, TOLERANCE};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error("support sizes must lie in 1..={max}, got {got:?}")]
    Support {
        got: (usize, usize, usize),
        max: usize,
    },
    #[error("concept count {0} must be between 1 and the smallest support size")]
    Concepts(usize),
    #[error("table has {got} entries, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error("probabilities must be non-negative and sum to 1 (sum {0})")]
    NotNormalized(f64),
    #[error("observation {value} outside support of size {size}")]
    OutOfSupport { value: usize, size: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
