//! Phase-type renewal models on small continuous-time Markov chains.
//!
//! The direct problem maps a rate vector to the survival function
//! `S(t) = Σ A_i e^{λ_i t}` of the time between observed events; the inverse
//! problem recovers every rate vector (in a catalog of candidate models)
//! consistent with given `(λ, A)`.

pub mod direct;
mod error;
pub mod inverse;
pub mod linalg;
pub mod model;
pub mod rashomon;
pub mod scalar;
pub mod stochastic;

pub use direct::{moments, phase_type_params, spectrum, PhaseTypeParams, Spectrum, SymmetricMoments};
pub use error::Error;
pub use inverse::{
    invert_generic, invert_thomas, invert_unbranched, roundtrip_residual, symmetric_inputs, InverseSolution,
    InvertOptions,
};
pub use model::{validate, Generator, ModelId, RateVector, ValidationReport};
pub use stochastic::{empirical_survival, fit_multiexp, ks_statistic, simulate_events, EventTrace, FitConfig, FitResult};
