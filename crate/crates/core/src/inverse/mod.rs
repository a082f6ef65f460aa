//! Inverse problem: every rate vector of a model consistent with given
//! phase-type parameters, expressed through the symmetric moments `(L, S)`.
//!
//! Three solvers:
//! - [`invert_generic`]: closed forms valid on the generic stratum of each
//!   three-state catalog model;
//! - [`invert_thomas`]: all strata, from stored triangular (simple) systems;
//! - [`invert_unbranched`]: recursion for unbranched chains of any length.

mod generic;
pub mod poly;
pub mod thomas;
mod unbranched;

use serde::{Deserialize, Serialize};

pub use generic::{
    closed_form, generic_conditions, invert_generic, invert_generic_dd, invert_generic_with,
    m3_family, m3_family_dd, M3Family,
};
pub use thomas::{invert_thomas, invert_thomas_with, SimpleSystem};
pub use unbranched::{invert_unbranched, invert_unbranched_dd, invert_unbranched_in};

use crate::direct::{moments, PhaseTypeParams, SymmetricMoments};
use crate::model::{Generator, ModelId, RateVector};
use crate::scalar::{Dd, Scalar};
use crate::Error;

/// Default relative band of the vanishing test.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default values tried for a free rate.
pub const DEFAULT_FREE_GRID: [f64; 3] = [0.1, 1.0, 10.0];

/// Which simple system produced a solution, and which root was taken at each
/// quadratic leader (`+1`: `-(b + √D)/(2a)`, `-1`: `-(b - √D)/(2a)`, `0`: double root).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub system: usize,
    pub roots: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseSolution {
    pub model: ModelId,
    pub rates: RateVector,
    pub branch: Branch,
    pub free_params: Vec<(String, f64)>,
    pub residual: f64,
    /// Some rate is `<= 0`; kept so callers can count such solutions.
    pub nonpositive: bool,
}

impl InverseSolution {
    pub(crate) fn new(
        model: ModelId,
        rates: RateVector,
        branch: Branch,
        free_params: Vec<(String, f64)>,
        target: &SymmetricMoments<Dd>,
    ) -> Self {
        let residual = residual_dd(model, &rates, target);
        let nonpositive = rates.iter().any(|&r| !(r > 0.0));
        InverseSolution { model, rates, branch, free_params, residual, nonpositive }
    }

    /// All rates finite and positive.
    pub fn is_valid(&self) -> bool {
        self.rates.iter().all(|r| r.is_finite() && *r > 0.0)
    }

    /// Largest relative difference to `rates`.
    pub fn rel_err(&self, rates: &[f64]) -> f64 {
        rel_dev(&self.rates, rates)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertOptions {
    pub tol: f64,
    /// Values tried for free rates (M3's k3 and free variables of degenerate strata).
    pub free_grid: Vec<f64>,
}

impl Default for InvertOptions {
    fn default() -> Self {
        InvertOptions { tol: DEFAULT_TOL, free_grid: DEFAULT_FREE_GRID.to_vec() }
    }
}

/// Entry point of the inverse pipeline: the moments of `p`.
pub fn symmetric_inputs(p: &PhaseTypeParams) -> SymmetricMoments {
    moments(p)
}

/// Componentwise `max |a - b| / |b|`, with denominator 1 where `b = 0`.
pub fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if *y == 0.0 { d } else { d / y.abs() }
        })
        .fold(0.0, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
}

/// Largest relative deviation between the moments of `model` at `rates` and
/// `target`. Moments are taken from the generator directly, so the residual is
/// defined for nonpositive rates and complex spectra too.
pub fn roundtrip_residual(model: ModelId, rates: &[f64], target: &SymmetricMoments) -> Result<f64, Error> {
    Generator::new(model, rates)?;
    if target.n() != model.n_states() {
        return Err(Error::InvalidParams(format!(
            "target has {} states, model {model} has {}",
            target.n(),
            model.n_states()
        )));
    }
    Ok(residual_dd(model, rates, &target.to_dd()))
}

pub(crate) fn residual_dd(model: ModelId, rates: &[f64], target: &SymmetricMoments<Dd>) -> f64 {
    let r: Vec<Dd> = rates.iter().map(|&x| Dd::from_f64(x)).collect();
    let m = SymmetricMoments::from_rates(model, &r);
    let got: Vec<f64> = m.to_vec().iter().map(|x| x.re()).collect();
    let want: Vec<f64> = target.to_vec().iter().map(|x| x.re()).collect();
    rel_dev(&got, &want)
}

/// True when `Σ terms` vanishes relative to `Σ |terms|` within `tol`.
/// A single-term condition vanishes only when the term is exactly zero.
pub(crate) fn vanishes(terms: &[f64], tol: f64) -> bool {
    let (v, s) = terms.iter().fold((0.0f64, 0.0f64), |(v, s), t| (v + t, s + t.abs()));
    v.abs() <= tol * s
}
