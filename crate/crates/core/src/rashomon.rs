//! Variant models: distinct models or parameterizations with the same
//! phase-type distribution, the markers (lifetimes `T`, occupancies `p`) that
//! could tell them apart, and a Monte Carlo estimate of how often they do.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::direct::{PhaseTypeParams, SymmetricMoments, TOL_SEP};
use crate::inverse::{self, closed_form, InverseSolution, InvertOptions};
use crate::linalg::{self, Mat};
use crate::model::{qtilde_in, ModelId, RateVector};
use crate::Error;

/// State lifetimes and steady-state occupancies of the chain without exit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Markers {
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    pub p: Vec<f64>,
}

/// Q̃ with the exit rate removed from the return-state diagonal.
fn qred(model: ModelId, rates: &[f64]) -> Mat<f64> {
    let mut q: Mat<f64> = qtilde_in(model, rates);
    let n = q.len();
    q[n - 1][n - 1] += rates[model.exit_index()];
    q
}

/// `T_i = -1/Q̃red_ii`; `p` spans the null space of `Q̃red`, computed from the
/// principal minors of `-Q̃red` (matrix-tree form) and normalised to sum 1.
pub fn markers(model: ModelId, rates: &[f64]) -> Result<Markers, Error> {
    crate::model::Generator::new(model, rates)?;
    markers_of_qred(&qred(model, rates))
}

pub fn markers_of_qred(q: &Mat<f64>) -> Result<Markers, Error> {
    let n = q.len();
    let t = (0..n).map(|i| -1.0 / q[i][i]).collect();
    let neg: Mat<f64> = q.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
    let minors: Vec<f64> = (0..n).map(|i| linalg::det(linalg::minor(&neg, i, i))).collect();
    let total: f64 = minors.iter().sum();
    let size: f64 = minors.iter().map(|m| m.abs()).sum();
    if !(total.abs() > 1e-12 * size) || size == 0.0 {
        let m = linalg::to_dmatrix(q);
        let sv = m.singular_values();
        let rank = sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count();
        return Err(Error::SingularSteadyState(n - rank));
    }
    Ok(Markers { t, p: minors.iter().map(|m| m / total).collect() })
}

/// Relabelling of M9 that swaps states 1 and 2.
pub fn sigma_m9(rates: &[f64]) -> RateVector {
    vec![rates[1], rates[0], rates[3], rates[2], rates[4]]
}

fn check_positive(rates: &[f64], what: &str) -> Result<(), Error> {
    if rates.len() != 5 {
        return Err(Error::WrongArity { model: ModelId::M9, expected: 5, got: rates.len() });
    }
    match rates.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
        Some(i) => Err(Error::DomainViolation(format!("{what}: rate k{} is not positive", i + 1))),
        None => Ok(()),
    }
}

/// M9 rates to the M8 rates with the same phase-type distribution;
/// needs `k2 > k1`.
pub fn map_m9_to_m8(k: &[f64]) -> Result<RateVector, Error> {
    check_positive(k, "M9 source")?;
    if !(k[1] > k[0]) {
        return Err(Error::DomainViolation("M9 to M8 needs k2 > k1".into()));
    }
    let out = vec![k[0], k[1], k[2] * (k[1] - k[0]) / k[1], (k[0] * k[2] + k[1] * k[3]) / k[1], k[4]];
    check_positive(&out, "M8 image")?;
    Ok(out)
}

pub fn map_m8_to_m9(k: &[f64]) -> Result<RateVector, Error> {
    check_positive(k, "M8 source")?;
    if !(k[1] > k[0]) {
        return Err(Error::DomainViolation("M8 to M9 needs k2 > k1".into()));
    }
    let k3 = k[2] * k[1] / (k[1] - k[0]);
    let k4 = (k[1] * k[3] - k[0] * k3) / k[1];
    let out = vec![k[0], k[1], k3, k4, k[4]];
    check_positive(&out, "M9 image")?;
    Ok(out)
}

/// M9 rates to the M4 rates with the same phase-type distribution;
/// needs `k1 > k2`.
pub fn map_m9_to_m4(k: &[f64]) -> Result<RateVector, Error> {
    check_positive(k, "M9 source")?;
    if !(k[0] > k[1]) {
        return Err(Error::DomainViolation("M9 to M4 needs k1 > k2".into()));
    }
    let s = k[2] + k[3];
    let out = vec![(k[0] - k[1]) * k[3] / s, (k[0] * k[2] + k[1] * k[3]) / s, k[1], s, k[4]];
    check_positive(&out, "M4 image")?;
    Ok(out)
}

pub fn map_m4_to_m9(k: &[f64]) -> Result<RateVector, Error> {
    check_positive(k, "M4 source")?;
    let d = k[0] + k[1] - k[2];
    if !(d > 0.0) {
        return Err(Error::DomainViolation("M4 to M9 needs k1 + k2 > k3".into()));
    }
    let k4 = k[0] * k[3] / d;
    let out = vec![k[0] + k[1], k[2], k[3] - k4, k4, k[4]];
    check_positive(&out, "M9 image")?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub solution: InverseSolution,
    /// Present for valid solutions.
    pub markers: Option<Markers>,
    pub valid: bool,
}

/// Largest relative spread of the exit rate, `T_N` and `p_N` over valid variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub exit_rate_spread: f64,
    pub t_exit_spread: f64,
    pub p_exit_spread: f64,
}

impl ConstraintCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.exit_rate_spread <= tol && self.t_exit_spread <= tol && self.p_exit_spread <= tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub moments: SymmetricMoments,
    pub variants: Vec<Variant>,
    /// Models that produced no solution, with the reason.
    pub diagnostics: Vec<(ModelId, String)>,
    /// `max - min` of `p_i` over valid variants, per state.
    pub delta_p: Vec<f64>,
    /// `max - min` of `log10 T_i` over valid variants, per state.
    pub delta_log10_t: Vec<f64>,
    pub constraints: ConstraintCheck,
}

impl VariantReport {
    pub fn valid(&self) -> impl Iterator<Item = &Variant> {
        self.variants.iter().filter(|v| v.valid)
    }
}

fn spread(xs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo > hi { 0.0 } else { hi - lo }
}

fn rel_spread(xs: &[f64]) -> f64 {
    let scale = xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 { 0.0 } else { spread(xs.iter().copied()) / scale }
}

/// Every solution of every requested model for the phase-type input `p`,
/// generic closed forms first and the stored decompositions when the generic
/// branch does not apply. Unbranched chains use the chain recursion.
pub fn enumerate_variants(p: &PhaseTypeParams, models: &[ModelId]) -> VariantReport {
    collect_variants(&inverse::symmetric_inputs(p), Some(p), models)
}

/// As [`enumerate_variants`], from moments (catalog models only).
pub fn enumerate_variants_for_moments(m: &SymmetricMoments, models: &[ModelId]) -> VariantReport {
    collect_variants(m, None, models)
}

fn collect_variants(m: &SymmetricMoments, p: Option<&PhaseTypeParams>, models: &[ModelId]) -> VariantReport {
    let mut variants = Vec::new();
    let mut diagnostics = Vec::new();
    let opts = InvertOptions::default();
    for &model in models {
        let sols = match (model, p) {
            (ModelId::UnbranchedChain(n), Some(p)) => inverse::invert_unbranched(n, p).map(|s| vec![s]),
            (ModelId::UnbranchedChain(_), None) => Err(Error::Unsupported("chains need (λ, A), not moments")),
            _ => inverse::invert_generic_with(model, m, &opts).or_else(|e| {
                if e.is_no_solution() {
                    inverse::invert_thomas_with(model, m, &opts)
                } else {
                    Err(e)
                }
            }),
        };
        match sols {
            Ok(s) if s.is_empty() => diagnostics.push((model, "no real solution".to_string())),
            Ok(s) => {
                for solution in s {
                    let mk = if solution.is_valid() { markers(model, &solution.rates).ok() } else { None };
                    let valid = mk.is_some();
                    variants.push(Variant { solution, markers: mk, valid });
                }
            }
            Err(e) => diagnostics.push((model, e.to_string())),
        }
    }
    finish_report(m.clone(), variants, diagnostics)
}

fn finish_report(moments: SymmetricMoments, variants: Vec<Variant>, diagnostics: Vec<(ModelId, String)>) -> VariantReport {
    let valid: Vec<&Variant> = variants.iter().filter(|v| v.valid).collect();
    let n = moments.n();
    let mk = |v: &&Variant| v.markers.clone().expect("valid variants carry markers");
    let delta_p = (0..n).map(|i| spread(valid.iter().map(|v| mk(v).p[i]))).collect();
    let delta_log10_t = (0..n).map(|i| spread(valid.iter().map(|v| mk(v).t[i].log10()))).collect();
    let exit: Vec<f64> = valid.iter().map(|v| v.solution.rates[v.solution.model.exit_index()]).collect();
    let t_exit: Vec<f64> = valid.iter().map(|v| mk(v).t[n - 1]).collect();
    let p_exit: Vec<f64> = valid.iter().map(|v| mk(v).p[n - 1]).collect();
    let constraints = ConstraintCheck {
        exit_rate_spread: rel_spread(&exit),
        t_exit_spread: rel_spread(&t_exit),
        p_exit_spread: rel_spread(&p_exit),
    };
    VariantReport { moments, variants, diagnostics, delta_p, delta_log10_t, constraints }
}

/// How complex roots of the quadratic leaders are treated in the experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootPolicy {
    /// Evaluate the closed forms in complex arithmetic and accept a branch
    /// when the real parts of all rates are positive.
    #[default]
    RealPart,
    /// Only real roots (positive discriminant) with positive rates.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// λ_i = -10^u with u uniform on this interval.
    pub log10_lambda_range: (f64, f64),
    pub root_policy: RootPolicy,
    /// Relative band under which a marker does not discriminate.
    pub zero_tol: f64,
    pub bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_samples: 100_000,
            seed: 20_240_611,
            log10_lambda_range: (-4.0, 0.0),
            root_policy: RootPolicy::RealPart,
            zero_tol: 1e-9,
            bins: 40,
        }
    }
}

/// Marker order in [`SampleOutcome::delta`] and the report.
pub const MARKERS: [&str; 4] = ["p1", "log10_T1", "log10_T2", "p2"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub n_valid: usize,
    /// Spread over valid variants of `p1`, `log10 T1`, `log10 T2`, `p2`.
    pub delta: [f64; 4],
    /// Per marker: true when the spread is within the zero band.
    pub zero: [bool; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub marker: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n_samples: usize,
    pub n_retained: usize,
    pub retained_fraction: f64,
    /// Fraction of retained samples in which the marker does not discriminate,
    /// in [`MARKERS`] order.
    pub zero_discrimination: [f64; 4],
    /// Number of retained samples with 1, 2, ... valid variants.
    pub valid_variant_counts: Vec<u64>,
    pub histograms: Vec<Histogram>,
}

fn draw_params(cfg: &ExperimentConfig, index: u64) -> ([f64; 3], [f64; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let a1: f64 = rng.random();
    let a2: f64 = rng.random();
    let (lo, hi) = cfg.log10_lambda_range;
    loop {
        let lam: [f64; 3] = std::array::from_fn(|_| -10f64.powf(lo + (hi - lo) * rng.random::<f64>()));
        let separated = (0..3).all(|i| {
            (i + 1..3).all(|j| (lam[i] - lam[j]).abs() > TOL_SEP * lam[i].abs().max(lam[j].abs()))
        });
        if separated {
            return (lam, [a1, a2, 1.0 - a1 - a2]);
        }
    }
}

/// Variants of one phase-type input under `policy` and the marker spreads.
pub fn evaluate_sample(m: &SymmetricMoments, policy: RootPolicy, zero_tol: f64) -> SampleOutcome {
    let v = [m.l[0], m.l[1], m.l[2], m.s[0], m.s[1]];
    let mut found: Vec<Markers> = Vec::new();
    for model in [ModelId::M2, ModelId::M4, ModelId::M8, ModelId::M9] {
        let roots: &[i8] = if model == ModelId::M2 { &[1] } else { &[1, -1] };
        for &r in roots {
            let rates: Option<[f64; 5]> = match policy {
                RootPolicy::RealPart => closed_form(model, &v.map(|x| Complex64::new(x, 0.0)), r)
                    .ok()
                    .map(|k| k.map(|z| z.re)),
                RootPolicy::Strict => {
                    let [l1, _, l3, s1, s2] = v;
                    let d = l1 * l1 * s1 * s1 - 2.0 * l1 * s1 * s2 - 4.0 * l3 * s1 + s2 * s2;
                    if model != ModelId::M2 && !(d > 0.0) {
                        None
                    } else {
                        closed_form(model, &v, r).ok()
                    }
                }
            };
            let Some(k) = rates else { continue };
            if k.iter().all(|x| x.is_finite() && *x > 0.0) {
                if let Ok(mk) = markers_of_qred(&qred(model, &k)) {
                    found.push(mk);
                }
            }
        }
    }
    let col = |f: &dyn Fn(&Markers) -> f64| found.iter().map(f).collect::<Vec<f64>>();
    let p1 = col(&|m| m.p[0]);
    let p2 = col(&|m| m.p[1]);
    let t1 = col(&|m| m.t[0].log10());
    let t2 = col(&|m| m.t[1].log10());
    let delta = [spread(p1.iter().copied()), spread(t1.iter().copied()), spread(t2.iter().copied()), spread(p2.iter().copied())];
    let pmax = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max);
    let zero = [
        delta[0] <= zero_tol * pmax(&p1),
        delta[1] <= zero_tol,
        delta[2] <= zero_tol,
        delta[3] <= zero_tol * pmax(&p2),
    ];
    SampleOutcome { n_valid: found.len(), delta, zero }
}

fn run_one(cfg: &ExperimentConfig, index: usize) -> SampleOutcome {
    let (lam, a) = draw_params(cfg, index as u64);
    let m = SymmetricMoments::from_params(&lam, &a);
    evaluate_sample(&m, cfg.root_policy, cfg.zero_tol)
}

/// Samples random three-exponential inputs, counts those explained by at
/// least one valid variant of M2, M4, M8 or M9, and measures per marker how
/// often the variants agree. Sample `i` uses its own ChaCha stream, and the
/// reduction is in sample order, so the report does not depend on the
/// number of threads.
pub fn discrimination_experiment(cfg: &ExperimentConfig) -> ExperimentReport {
    #[cfg(feature = "parallel")]
    let outcomes: Vec<SampleOutcome> = {
        use rayon::prelude::*;
        (0..cfg.n_samples).into_par_iter().map(|i| run_one(cfg, i)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<SampleOutcome> = (0..cfg.n_samples).map(|i| run_one(cfg, i)).collect();
    summarize(cfg, &outcomes)
}

fn summarize(cfg: &ExperimentConfig, outcomes: &[SampleOutcome]) -> ExperimentReport {
    let retained: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.n_valid > 0).collect();
    let n_retained = retained.len();
    let frac = |c: usize| if n_retained == 0 { 0.0 } else { c as f64 / n_retained as f64 };
    let zero_discrimination = std::array::from_fn(|j| frac(retained.iter().filter(|o| o.zero[j]).count()));
    let max_valid = retained.iter().map(|o| o.n_valid).max().unwrap_or(0);
    let mut valid_variant_counts = vec![0u64; max_valid];
    for o in &retained {
        valid_variant_counts[o.n_valid - 1] += 1;
    }
    let bins = cfg.bins.max(1);
    let histograms = MARKERS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let upper = if name.starts_with('p') {
                1.0
            } else {
                retained.iter().map(|o| o.delta[j]).fold(1.0, f64::max).ceil()
            };
            let edges: Vec<f64> = (0..=bins).map(|b| upper * b as f64 / bins as f64).collect();
            let mut counts = vec![0u64; bins];
            for o in &retained {
                let b = ((o.delta[j] / upper) * bins as f64) as usize;
                counts[b.min(bins - 1)] += 1;
            }
            Histogram { marker: name.to_string(), edges, counts }
        })
        .collect();
    ExperimentReport {
        config: cfg.clone(),
        n_samples: outcomes.len(),
        n_retained,
        retained_fraction: if outcomes.is_empty() { 0.0 } else { n_retained as f64 / outcomes.len() as f64 },
        zero_discrimination,
        valid_variant_counts,
        histograms,
    }
}

impl ExperimentReport {
    /// `marker,lo,hi,count` rows for plotting.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("marker,lo,hi,count\n");
        for h in &self.histograms {
            for (b, c) in h.counts.iter().enumerate() {
                out.push_str(&format!("{},{:.17e},{:.17e},{}\n", h.marker, h.edges[b], h.edges[b + 1], c));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::{moments, phase_type_params};
    use crate::inverse::{invert_generic, rel_dev};
    use crate::model::Generator;
    use crate::scalar::{Dd, Scalar};
    use proptest::prelude::*;

    /// Reciprocal lifetimes and p3 from the closed forms of the catalog table.
    fn table(model: ModelId, k: &[f64]) -> ([f64; 3], f64) {
        let [k1, k2, k3, k4, _] = k[..5].try_into().unwrap();
        match model {
            ModelId::M2 => ([k1 + k2, k3, k4], k2 * k3 / (k1 * k4 + k2 * k3 + k3 * k4)),
            ModelId::M4 => ([k1 + k2, k3, k4], (k1 * k3 + k2 * k3) / (k1 * k3 + k1 * k4 + k2 * k3 + k3 * k4)),
            ModelId::M8 => ([k1, k2, k3 + k4], k1 * k2 / (k1 * k2 + k1 * k3 + k1 * k4 + k2 * k3)),
            ModelId::M9 => ([k1, k2, k3 + k4], k1 * k2 / (k1 * k2 + k1 * k4 + k2 * k3)),
            _ => unreachable!(),
        }
    }

    fn svd_null_vector(model: ModelId, k: &[f64]) -> Vec<f64> {
        let m = linalg::to_dmatrix(&qred(model, k));
        let svd = m.svd(true, true);
        let i = svd.singular_values.imin();
        let v = svd.v_t.unwrap().row(i).transpose();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    }

    #[test]
    fn m9_and_m8_examples() {
        let m9 = markers(ModelId::M9, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(rel_dev(&m9.t, &[1.0, 0.5, 1.0 / 7.0]) < 1e-15);
        // detailed balance: p1 k1 = p3 k3, p2 k2 = p3 k4
        assert!(rel_dev(&m9.p, &[0.5, 1.0 / 3.0, 1.0 / 6.0]) < 1e-14);
        let m8 = markers(ModelId::M8, &[1.0, 2.0, 1.5, 5.5, 5.0]).unwrap();
        assert!(rel_dev(&m8.t, &m9.t) < 1e-15);
        assert!(rel_dev(&m8.p, &[0.25, 7.0 / 12.0, 1.0 / 6.0]) < 1e-14);
        assert!(rel_dev(&m8.p, &svd_null_vector(ModelId::M8, &[1.0, 2.0, 1.5, 5.5, 5.0])) < 1e-12);
    }

    #[test]
    fn symmetric_chain_is_uniform() {
        let m = markers(ModelId::UnbranchedChain(4), &[2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(rel_dev(&m.p, &[0.25; 4]) < 1e-14);
    }

    #[test]
    fn disconnected_chain_has_no_unique_steady_state() {
        // k1+ = k1- = 0 splits state 1 off
        let r = markers(ModelId::UnbranchedChain(3), &[0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(r, Err(Error::SingularSteadyState(2)));
    }

    #[test]
    fn sigma_examples() {
        let k = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(sigma_m9(&k), vec![2.0, 1.0, 4.0, 3.0, 5.0]);
        assert_eq!(sigma_m9(&sigma_m9(&k)), k.to_vec());
        let sym = [1.5, 1.5, 2.0, 2.0, 3.0];
        assert_eq!(sigma_m9(&sym), sym.to_vec());
        let a = SymmetricMoments::from_rates(ModelId::M9, &k);
        let b = SymmetricMoments::from_rates(ModelId::M9, &sigma_m9(&k));
        assert!(rel_dev(&a.to_vec(), &b.to_vec()) < 1e-15);
    }

    #[test]
    fn map_examples() {
        let m8 = map_m9_to_m8(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(m8, vec![1.0, 2.0, 1.5, 5.5, 5.0]);
        let m4 = map_m9_to_m4(&[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!(rel_dev(&m4, &[3.0 / 7.0, 11.0 / 7.0, 1.0, 7.0, 5.0]) < 1e-15);
        let src = SymmetricMoments::from_rates(ModelId::M9, &[2.0, 1.0, 4.0, 3.0, 5.0]);
        let img = SymmetricMoments::from_rates(ModelId::M4, &m4);
        assert!(rel_dev(&img.to_vec(), &src.to_vec()) < 1e-14);
        assert!(matches!(map_m9_to_m8(&[2.0, 1.0, 4.0, 3.0, 5.0]), Err(Error::DomainViolation(_))));
        assert!(matches!(map_m9_to_m4(&[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn m9_variant_report() {
        let m = SymmetricMoments::from_slice(&[-15.0, 27.0, -10.0, -5.0, 60.0]).unwrap();
        let r = enumerate_variants_for_moments(&m, &[ModelId::M2, ModelId::M4, ModelId::M8, ModelId::M9]);
        let m9: Vec<_> = r.valid().filter(|v| v.solution.model == ModelId::M9).collect();
        assert_eq!(m9.len(), 2);
        let has = |model, rates: &[f64]| r.valid().any(|v| v.solution.model == model && v.solution.rel_err(rates) < 1e-12);
        assert!(has(ModelId::M8, &[1.0, 2.0, 1.5, 5.5, 5.0]));
        assert!(has(ModelId::M4, &[3.0 / 7.0, 11.0 / 7.0, 1.0, 7.0, 5.0]));
        for v in r.valid() {
            let mk = v.markers.as_ref().unwrap();
            assert!((mk.t[2] - 1.0 / 7.0).abs() < 1e-12 && (mk.p[2] - 1.0 / 6.0).abs() < 1e-12);
            assert_eq!(v.solution.rates[4], 5.0);
        }
        assert!(r.constraints.holds(1e-8), "{:?}", r.constraints);
        assert!(r.delta_p[0] > 0.2);
    }

    #[test]
    fn m2_variant_is_unique() {
        let rates = [1.0, 2.0, 1.5, 0.5, 3.0];
        let p = phase_type_params(&Generator::new(ModelId::M2, &rates).unwrap()).unwrap();
        let r = enumerate_variants(&p, &[ModelId::M2]);
        assert_eq!(r.variants.len(), 1);
        assert!(r.variants[0].valid && r.variants[0].solution.rel_err(&rates) < 1e-10);
    }

    #[test]
    fn out_of_domain_input_gives_empty_report() {
        let m = SymmetricMoments::from_slice(&[-15.0, 27.0, -10.0, 0.0, 60.0]).unwrap();
        let r = enumerate_variants_for_moments(&m, &[ModelId::M8, ModelId::M9]);
        assert!(r.variants.is_empty());
        assert_eq!(r.diagnostics.len(), 2);
        assert_eq!(r.delta_p, vec![0.0; 3]);
    }

    #[test]
    fn single_sample_with_known_variants() {
        let m = SymmetricMoments::from_slice(&[-15.0, 27.0, -10.0, -5.0, 60.0]).unwrap();
        let o = evaluate_sample(&m, RootPolicy::RealPart, 1e-9);
        assert!(o.n_valid >= 3);
        // p1 ranges over at least 1/2 (M9) and 1/4 (M8)
        assert!(o.delta[0] >= 0.25 - 1e-12 && !o.zero[0]);
        let strict = evaluate_sample(&m, RootPolicy::Strict, 1e-9);
        assert_eq!(strict.n_valid, o.n_valid);
    }

    #[test]
    fn experiment_is_deterministic_and_counts_add_up() {
        let cfg = ExperimentConfig { n_samples: 300, ..ExperimentConfig::default() };
        let a = discrimination_experiment(&cfg);
        let b = discrimination_experiment(&cfg);
        assert_eq!(a, b);
        assert_eq!(a.valid_variant_counts.iter().sum::<u64>() as usize, a.n_retained);
        for h in &a.histograms {
            assert_eq!(h.counts.iter().sum::<u64>() as usize, a.n_retained);
        }
        let strict = discrimination_experiment(&ExperimentConfig { root_policy: RootPolicy::Strict, ..cfg });
        assert!(strict.n_retained <= a.n_retained);
        assert!(a.histogram_csv().starts_with("marker,lo,hi,count\np1,"));
    }

    fn log_uniform() -> impl Strategy<Value = f64> {
        (-2.0f64..2.0).prop_map(|e| 10f64.powf(e))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn markers_match_table(
            model in prop::sample::select(vec![ModelId::M2, ModelId::M4, ModelId::M8, ModelId::M9]),
            k in prop::collection::vec(log_uniform(), 5),
        ) {
            let mk = markers(model, &k).unwrap();
            let (tinv, p3) = table(model, &k);
            let t: Vec<f64> = tinv.iter().map(|x| 1.0 / x).collect();
            prop_assert!(rel_dev(&mk.t, &t) < 1e-10);
            prop_assert!((mk.p[2] - p3).abs() <= 1e-10 * p3);
            prop_assert!((mk.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(rel_dev(&mk.p, &svd_null_vector(model, &k)) < 1e-6);
        }

        #[test]
        fn sigma_swaps_the_two_m9_solutions(k in prop::collection::vec(log_uniform(), 5)) {
            let gen = Generator::new(ModelId::M9, &k).unwrap();
            let Ok(p) = phase_type_params(&gen) else { return Ok(()) };
            let Ok(sols) = invert_generic(ModelId::M9, &moments(&p)) else { return Ok(()) };
            let swapped = sigma_m9(&sols[0].rates);
            prop_assert!(rel_dev(&swapped, &sols[1].rates) < 1e-8, "{:?} {:?}", swapped, sols[1].rates);
        }

        #[test]
        fn maps_preserve_moments_and_lifetimes(k in prop::collection::vec(log_uniform(), 5)) {
            let src = SymmetricMoments::from_rates(ModelId::M9, &k);
            let mk = markers(ModelId::M9, &k).unwrap();
            let (img, model, back) = if k[1] > k[0] {
                let i = map_m9_to_m8(&k).unwrap();
                let b = map_m8_to_m9(&i).unwrap();
                (i, ModelId::M8, b)
            } else {
                let i = map_m9_to_m4(&k).unwrap();
                let b = map_m4_to_m9(&i).unwrap();
                (i, ModelId::M4, b)
            };
            let dd = |model, r: &[f64]| {
                let r: Vec<Dd> = r.iter().map(|&x| Dd::from_f64(x)).collect();
                SymmetricMoments::from_rates(model, &r).to_vec().iter().map(|x| x.re()).collect::<Vec<f64>>()
            };
            let (m, want) = (dd(model, &img), dd(ModelId::M9, &k));
            prop_assert!(rel_dev(&m, &want) < 1e-9, "{:?} vs {:?} ({:?})", m, want, src.to_vec());
            prop_assert!(rel_dev(&back, &k) < 1e-10);
            let mi = markers(model, &img).unwrap();
            prop_assert!(rel_dev(&mi.t, &mk.t) < 1e-10);
            prop_assert!((mi.p[2] - mk.p[2]).abs() < 1e-10 * mk.p[2]);
        }
    }
}
