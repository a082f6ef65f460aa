//! Browser bindings. Each exported function takes plain strings and numbers
//! and returns JSON; the `*_json` functions hold the logic and run natively.

use phasekit::direct::TimeGrid;
use phasekit::model::SOLVABLE;
use phasekit::rashomon::{discrimination_experiment, enumerate_variants, enumerate_variants_for_moments, ExperimentConfig, RootPolicy};
use phasekit::{phase_type_params, Generator, ModelId, PhaseTypeParams, SymmetricMoments};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest experiment the page will run in one call.
pub const MAX_SAMPLES: usize = 200_000;

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    #[serde(flatten)]
    params: PhaseTypeParams,
    mean_time: f64,
    t: Vec<f64>,
    #[serde(rename = "S")]
    s: Vec<f64>,
    f: Vec<f64>,
}

/// `(λ, A)` of a model plus `S(t)` and `f(t)` on a linear grid.
pub fn survival_json(model: &str, rates: &str, points: usize) -> Result<String, String> {
    let model: ModelId = model.parse().map_err(|e: phasekit::Error| e.to_string())?;
    let gen = Generator::new(model, &numbers(rates)?).map_err(|e| e.to_string())?;
    let p = phase_type_params(&gen).map_err(|e| e.to_string())?;
    let TimeGrid::Linear { t_max, .. } = TimeGrid::default_for(&p) else { unreachable!() };
    let t = TimeGrid::Linear { t_max, points: points.clamp(2, 2000) }.points();
    Ok(to_json(&Curve {
        mean_time: p.mean_time(),
        s: t.iter().map(|&x| p.survival(x)).collect(),
        f: t.iter().map(|&x| p.density(x)).collect(),
        t,
        params: p,
    })?)
}

/// Variant report for `(λ, A)` (both nonempty) or for moments.
pub fn variants_json(lambda: &str, a: &str, moments: &str) -> Result<String, String> {
    let report = if !moments.trim().is_empty() {
        let m = SymmetricMoments::from_slice(&numbers(moments)?).map_err(|e| e.to_string())?;
        enumerate_variants_for_moments(&m, &SOLVABLE)
    } else {
        let p = PhaseTypeParams::new(numbers(lambda)?, numbers(a)?).map_err(|e| e.to_string())?;
        enumerate_variants(&p, &SOLVABLE)
    };
    to_json(&report)
}

/// Discrimination experiment summary with histograms.
pub fn experiment_json(n_samples: usize, seed: u64, strict: bool) -> Result<String, String> {
    if n_samples == 0 || n_samples > MAX_SAMPLES {
        return Err(format!("samples must be in 1..={MAX_SAMPLES}"));
    }
    let cfg = ExperimentConfig {
        n_samples,
        seed,
        root_policy: if strict { RootPolicy::Strict } else { RootPolicy::RealPart },
        ..ExperimentConfig::default()
    };
    to_json(&discrimination_experiment(&cfg))
}

#[wasm_bindgen]
pub fn survival(model: &str, rates: &str, points: usize) -> Result<String, JsError> {
    survival_json(model, rates, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn variants(lambda: &str, a: &str, moments: &str) -> Result<String, JsError> {
    variants_json(lambda, a, moments).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn experiment(n_samples: usize, seed: u64, strict: bool) -> Result<String, JsError> {
    experiment_json(n_samples, seed, strict).map_err(|e| JsError::new(&e))
}
