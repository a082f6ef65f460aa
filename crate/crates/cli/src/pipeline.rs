use anyhow::Result;
use phasekit::inverse::m3_family;
use phasekit::model::SOLVABLE;
use phasekit::rashomon::{enumerate_variants, VariantReport};
use phasekit::stochastic::{dkw_bound, fit_multiexp, ks_statistic, simulate_events, FitConfig, FitResult};
use phasekit::{phase_type_params, Generator, ModelId, PhaseTypeParams, RateVector, SymmetricMoments};
use serde::Serialize;

/// Rel error below which the ground truth counts as recovered.
pub const RECOVERY_TOL: f64 = 0.15;

#[derive(Debug, Serialize)]
pub struct TraceStats {
    pub n_events: usize,
    pub mean: f64,
    pub analytic_mean: f64,
    /// KS distance to the true survival function.
    pub ks: f64,
    pub dkw_bound_alpha_0_01: f64,
}

#[derive(Debug, Serialize)]
pub struct GroundTruth {
    pub model: ModelId,
    pub rates: RateVector,
    pub params: PhaseTypeParams,
    pub solvable: bool,
    /// Smallest rel error between the true rates and a valid variant of the
    /// same model.
    pub best_rel_err: Option<f64>,
    pub recovered: bool,
    /// For M3: family members at the true moments (k3 on the default grid).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<RateVector>>,
}

#[derive(Debug, Serialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub trace: TraceStats,
    pub fit: FitResult,
    pub fitted_moments: SymmetricMoments,
    pub variants: VariantReport,
    pub ground_truth: GroundTruth,
}

pub fn run(model: ModelId, rates: &[f64], n_events: usize, seed: u64, cfg: &FitConfig) -> Result<PipelineReport> {
    let gen = Generator::new(model, rates)?;
    let truth = phase_type_params(&gen)?;
    let trace = simulate_events(&gen, n_events, seed)?;
    let stats = TraceStats {
        n_events,
        mean: trace.mean(),
        analytic_mean: truth.mean_time(),
        ks: ks_statistic(&trace, &truth)?,
        dkw_bound_alpha_0_01: dkw_bound(n_events, 0.01),
    };
    let fit = fit_multiexp(&trace, model.n_states(), cfg)?;

    let models: Vec<ModelId> = match model {
        ModelId::UnbranchedChain(_) => vec![model],
        _ => SOLVABLE.to_vec(),
    };
    let variants = enumerate_variants(&fit.params, &models);
    let best_rel_err = variants
        .valid()
        .filter(|v| v.solution.model == model)
        .map(|v| v.solution.rel_err(rates))
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.min(e))));
    let solvable = model != ModelId::M3;
    let family = if solvable {
        None
    } else {
        let fam = m3_family(&SymmetricMoments::from_rates(model, rates), phasekit::inverse::DEFAULT_TOL)?;
        Some(phasekit::inverse::DEFAULT_FREE_GRID.iter().map(|&k3| fam.at(k3)).collect())
    };
    Ok(PipelineReport {
        seed,
        trace: stats,
        fitted_moments: phasekit::symmetric_inputs(&fit.params),
        fit,
        variants,
        ground_truth: GroundTruth {
            model,
            rates: rates.to_vec(),
            params: truth,
            solvable,
            best_rel_err,
            recovered: best_rel_err.is_some_and(|e| e <= RECOVERY_TOL),
            family,
        },
    })
}
