use thiserror::Error;

use crate::model::ModelId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("{model} takes {expected} rates, got {got}")]
    WrongArity {
        model: ModelId,
        expected: usize,
        got: usize,
    },
    #[error("rate {index} is not finite")]
    NonFiniteRate { index: usize },
    #[error("invalid phase-type parameters: {0}")]
    InvalidParams(String),
    #[error("eigenvalues {lambda_i} and {lambda_j} (indices {i}, {j}) are not separated")]
    DegenerateSpectrum {
        i: usize,
        j: usize,
        lambda_i: f64,
        lambda_j: f64,
    },
    #[error("spectrum has a complex pair with imaginary part {imag}")]
    ComplexSpectrum { imag: f64 },
    #[error("amplitude system condition number {cond:e} exceeds 1e12")]
    IllConditioned { cond: f64 },
    #[error("no observation after {max_jumps} jumps; chain is not ergodic")]
    NonErgodic { max_jumps: u64 },
    #[error("need at least {need} gaps, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("fitted density is not positive on the data")]
    InvalidDensity,
    #[error("generic branch condition fails: {0}")]
    GenericBranchMiss(String),
    #[error("discriminant {0:e} is negative")]
    NegativeDiscriminant(f64),
    #[error("moments are off the M3 hypersurface (residual {0:e})")]
    M3HypersurfaceMiss(f64),
    #[error("no simple system accepts the moments (closest: system {best_system}, violation {best_violation:e})")]
    NoBranchMatches {
        best_system: usize,
        best_violation: f64,
        /// Worst violation per simple system, in system order.
        violations: Vec<f64>,
    },
    #[error("zero pivot at {0}")]
    ZeroPivot(String),
    #[error("steady state is not unique (null space dimension {0})")]
    SingularSteadyState(usize),
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("malformed simple-system data: {0}")]
    Data(String),
}

impl Error {
    /// True for errors meaning the inputs admit no solution on the requested
    /// branch, as opposed to malformed inputs.
    pub fn is_no_solution(&self) -> bool {
        matches!(
            self,
            Error::GenericBranchMiss(_)
                | Error::NegativeDiscriminant(_)
                | Error::M3HypersurfaceMiss(_)
                | Error::NoBranchMatches { .. }
        )
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownModel(_) => "unknown_model",
            Error::WrongArity { .. } => "wrong_arity",
            Error::NonFiniteRate { .. } => "non_finite_rate",
            Error::InvalidParams(_) => "invalid_params",
            Error::DegenerateSpectrum { .. } => "degenerate_spectrum",
            Error::ComplexSpectrum { .. } => "complex_spectrum",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NonErgodic { .. } => "non_ergodic",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::InvalidDensity => "invalid_density",
            Error::GenericBranchMiss(_) => "generic_branch_miss",
            Error::NegativeDiscriminant(_) => "negative_discriminant",
            Error::M3HypersurfaceMiss(_) => "m3_hypersurface_miss",
            Error::NoBranchMatches { .. } => "no_branch_matches",
            Error::ZeroPivot(_) => "zero_pivot",
            Error::SingularSteadyState(_) => "singular_steady_state",
            Error::DomainViolation(_) => "domain_violation",
            Error::Unsupported(_) => "unsupported",
            Error::Data(_) => "data",
        }
    }
}
