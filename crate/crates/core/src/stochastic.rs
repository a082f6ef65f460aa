//! Event-level simulation of the renewal process and multi-exponential
//! maximum-likelihood fitting of `(λ, A)` from inter-event times.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::direct::PhaseTypeParams;
use crate::model::{validate, Generator, ModelId, RateVector};
use crate::Error;

/// Jumps allowed per event before the chain is declared non-ergodic.
pub const DEFAULT_MAX_JUMPS: u64 = 10_000_000;
/// Events drawn from one RNG stream; stream `i` covers events `i*CHUNK..`.
const CHUNK: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub gaps: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateVector>,
}

impl EventTrace {
    /// A trace of observed gaps; every gap must be finite and positive.
    pub fn from_gaps(gaps: Vec<f64>, seed: u64) -> Result<Self, Error> {
        if let Some(i) = gaps.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidParams(format!("gap {i} is {} (must be positive)", gaps[i])));
        }
        Ok(EventTrace { gaps, seed, model: None, rates: None })
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.gaps.iter().sum::<f64>() / self.gaps.len() as f64
    }

    /// CSV with a single `gap` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.gaps.len() * 24 + 4);
        out.push_str("gap\n");
        for g in &self.gaps {
            out.push_str(&format!("{g:.17e}\n"));
        }
        out
    }

    /// Parses the `gap` CSV format. Blank lines are skipped.
    pub fn from_csv(text: &str, seed: u64) -> Result<Self, Error> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some("gap") => {}
            other => {
                return Err(Error::InvalidParams(format!("expected header `gap`, got {:?}", other.unwrap_or(""))))
            }
        }
        let gaps = lines
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>()
                    .map_err(|e| Error::InvalidParams(format!("row {}: `{l}`: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_gaps(gaps, seed)
    }
}

/// Outgoing arcs of one state: cumulative rates and targets.
struct Jumps {
    total: f64,
    cum: Vec<f64>,
    to: Vec<usize>,
}

fn jump_table(gen: &Generator) -> Vec<Jumps> {
    let q = gen.q();
    (0..gen.n())
        .map(|i| {
            let mut cum = Vec::new();
            let mut to = Vec::new();
            let mut acc = 0.0;
            for j in 0..=gen.n() {
                if j != i && q[(i, j)] > 0.0 {
                    acc += q[(i, j)];
                    cum.push(acc);
                    to.push(j);
                }
            }
            Jumps { total: acc, cum, to }
        })
        .collect()
}

/// Uniform on the open interval (0, 1).
fn open01(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn simulate_chunk(table: &[Jumps], start: usize, n: usize, seed: u64, stream: u64, max_jumps: u64) -> Result<Vec<f64>, Error> {
    let exit = table.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut gaps = Vec::with_capacity(n);
    for _ in 0..n {
        let (mut s, mut t, mut jumps) = (start, 0.0, 0u64);
        while s != exit {
            if jumps == max_jumps {
                return Err(Error::NonErgodic { max_jumps });
            }
            let j = &table[s];
            if j.total <= 0.0 {
                return Err(Error::NonErgodic { max_jumps });
            }
            t += -open01(&mut rng).ln() / j.total;
            let u = open01(&mut rng) * j.total;
            let k = j.cum.partition_point(|&c| c <= u).min(j.to.len() - 1);
            s = j.to[k];
            jumps += 1;
        }
        gaps.push(t);
    }
    Ok(gaps)
}

/// `n_events` inter-event times, each the time from the return state to the
/// exit. Deterministic for a fixed seed and independent of thread count.
pub fn simulate_events(gen: &Generator, n_events: usize, seed: u64) -> Result<EventTrace, Error> {
    simulate_events_with(gen, n_events, seed, DEFAULT_MAX_JUMPS)
}

pub fn simulate_events_with(gen: &Generator, n_events: usize, seed: u64, max_jumps: u64) -> Result<EventTrace, Error> {
    if n_events == 0 {
        return Err(Error::InvalidParams("n_events must be at least 1".into()));
    }
    let report = validate(gen);
    if !report.all_ok() {
        return Err(Error::InvalidParams(format!("generator fails validation: {report:?}")));
    }
    let table = jump_table(gen);
    let start = gen.return_state() - 1;
    let n_chunks = n_events.div_ceil(CHUNK);
    let chunk = |c: usize| {
        let len = CHUNK.min(n_events - c * CHUNK);
        simulate_chunk(&table, start, len, seed, c as u64, max_jumps)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<f64>, Error>> = {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<f64>, Error>> = (0..n_chunks).map(chunk).collect();
    let mut gaps = Vec::with_capacity(n_events);
    for p in parts {
        gaps.extend(p?);
    }
    Ok(EventTrace { gaps, seed, model: Some(gen.model()), rates: Some(gen.rates().to_vec()) })
}

/// Right-continuous empirical survivor `Ŝ(t) = #(gaps > t) / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalSurvival {
    sorted: Vec<f64>,
}

impl EmpiricalSurvival {
    pub fn at(&self, t: f64) -> f64 {
        let le = self.sorted.partition_point(|&g| g <= t);
        (self.sorted.len() - le) as f64 / self.sorted.len() as f64
    }

    /// Sorted gaps.
    pub fn times(&self) -> &[f64] {
        &self.sorted
    }

    /// `(t, Ŝ(t))` at each distinct gap.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let n = self.sorted.len() as f64;
        for (i, &t) in self.sorted.iter().enumerate() {
            let s = (self.sorted.len() - i - 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == t => last.1 = s,
                _ => out.push((t, s)),
            }
        }
        out
    }
}

pub fn empirical_survival(trace: &EventTrace) -> Result<EmpiricalSurvival, Error> {
    if trace.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let mut sorted = trace.gaps.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalSurvival { sorted })
}

/// `sup_t |Ŝ(t) - S(t)|` for any survivor `s`, evaluated at both sides of
/// each jump of `Ŝ`.
pub fn ks_statistic_with(trace: &EventTrace, s: impl Fn(f64) -> f64) -> Result<f64, Error> {
    let emp = empirical_survival(trace)?;
    let n = emp.sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &t) in emp.sorted.iter().enumerate() {
        let f = 1.0 - s(t);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

pub fn ks_statistic(trace: &EventTrace, p: &PhaseTypeParams) -> Result<f64, Error> {
    ks_statistic_with(trace, |t| p.survival(t))
}

/// DKW bound `sqrt(ln(2/α) / (2n))`.
pub fn dkw_bound(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the largest gradient component of the mean negative
    /// log-likelihood falls below this.
    pub tol: f64,
    pub seed: u64,
    /// Gaps used for the multistart phase.
    pub subsample: usize,
    /// Best starts refined on the full trace.
    pub polish: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { restarts: 20, max_iter: 500, tol: 1e-7, seed: 1, subsample: 20_000, polish: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: PhaseTypeParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
}

/// `Σ log f(t_j)`; `-∞` if the density is not positive at some gap.
pub fn log_likelihood(gaps: &[f64], p: &PhaseTypeParams) -> f64 {
    let rates: Vec<f64> = p.lambda.iter().map(|l| -l).collect();
    objective(gaps, &rates, &p.a, None)
}

/// Log-likelihood at rates `r` and amplitudes `a`; fills `grad` (with respect
/// to `(log r, a_1..a_{c-1})`, `a_c = 1 - Σ`) when given.
fn objective(gaps: &[f64], r: &[f64], a: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
    let c = r.len();
    let mut ll = 0.0;
    let mut e = vec![0.0; c];
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    for &t in gaps {
        // scale by e^{-r_min t} so the slowest term is O(1)
        let m = r.iter().fold(f64::INFINITY, |m, &x| m.min(x)) * t;
        let mut f = 0.0;
        for i in 0..c {
            e[i] = r[i] * (m - r[i] * t).exp();
            f += a[i] * e[i];
        }
        if !(f > 0.0) {
            return f64::NEG_INFINITY;
        }
        ll += f.ln() - m;
        if let Some(g) = grad.as_deref_mut() {
            for i in 0..c {
                g[i] += a[i] * e[i] * (1.0 - r[i] * t) / f;
            }
            for i in 0..c - 1 {
                g[c + i] += (e[i] - e[c - 1]) / f;
            }
        }
    }
    ll
}

fn unpack(theta: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
    let r: Vec<f64> = theta[..c].iter().map(|x| x.exp()).collect();
    let mut a: Vec<f64> = theta[c..].to_vec();
    a.push(1.0 - a.iter().sum::<f64>());
    (r, a)
}

struct Optimum {
    theta: Vec<f64>,
    ll: f64,
    converged: bool,
}

/// BFGS on the mean negative log-likelihood with Armijo backtracking.
fn bfgs(gaps: &[f64], c: usize, theta0: Vec<f64>, cfg: &FitConfig) -> Optimum {
    let dim = theta0.len();
    let n = gaps.len() as f64;
    let eval = |th: &[f64], g: &mut [f64]| {
        let (r, a) = unpack(th, c);
        let ll = objective(gaps, &r, &a, Some(g));
        g.iter_mut().for_each(|x| *x = -*x / n);
        -ll / n
    };
    let mut x = DVector::from_vec(theta0);
    let mut g = vec![0.0; dim];
    let mut fx = eval(x.as_slice(), &mut g);
    let mut gv = DVector::from_vec(g.clone());
    if !fx.is_finite() {
        return Optimum { theta: x.as_slice().to_vec(), ll: f64::NEG_INFINITY, converged: false };
    }
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        if gv.amax() <= cfg.tol {
            converged = true;
            break;
        }
        let mut d = -(&h * &gv);
        let mut slope = gv.dot(&d);
        if slope >= 0.0 {
            h = DMatrix::identity(dim, dim);
            d = -gv.clone();
            slope = -gv.norm_squared();
        }
        // cap log-rate steps so exp() stays in range
        let big = d.amax();
        let mut step = if big > 2.0 { 2.0 / big } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &d * step;
            let fnew = eval(xn.as_slice(), &mut g);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gn = DVector::from_vec(g.clone());
        let s = &xn - &x;
        let y = &gn - &gv;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(dim, dim);
            let left = &i - &s * y.transpose() * rho;
            let right = &i - &y * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
        }
        let small_change = (fx - fnew).abs() <= 1e-15 * fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        gv = gn;
        if small_change && gv.amax() <= cfg.tol.sqrt() {
            converged = true;
            break;
        }
    }
    if gv.amax() <= cfg.tol {
        converged = true;
    }
    Optimum { theta: x.as_slice().to_vec(), ll: -fx * n, converged }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

/// Starting points: log-spaced rates across the data's time scales, the first
/// evenly spread and the rest random; amplitudes equal.
fn starts(gaps: &[f64], c: usize, cfg: &FitConfig) -> Vec<Vec<f64>> {
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = (1.0 / quantile(&sorted, 0.99)).ln();
    let hi = (1.0 / quantile(&sorted, 0.01)).ln().max(lo + 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let amps = vec![1.0 / c as f64; c - 1];
    (0..cfg.restarts.max(1))
        .map(|j| {
            let mut lr: Vec<f64> = if j == 0 {
                (0..c).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / c as f64).collect()
            } else {
                (0..c).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
            };
            lr.sort_by(f64::total_cmp);
            lr.extend(&amps);
            lr
        })
        .collect()
}

fn run_all(gaps: &[f64], c: usize, thetas: Vec<Vec<f64>>, cfg: &FitConfig) -> Vec<Optimum> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        thetas.into_par_iter().map(|t| bfgs(gaps, c, t, cfg)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    thetas.into_iter().map(|t| bfgs(gaps, c, t, cfg)).collect()
}

/// Maximum-likelihood fit of `c` exponential components. Amplitudes may be
/// negative as long as the density stays positive on the data. A fit that
/// stops before the gradient test passes is returned with `converged = false`.
pub fn fit_multiexp(trace: &EventTrace, c: usize, cfg: &FitConfig) -> Result<FitResult, Error> {
    if c == 0 {
        return Err(Error::InvalidParams("need at least one component".into()));
    }
    let need = 10 * (2 * c - 1);
    if trace.len() < need {
        return Err(Error::InsufficientData { need, got: trace.len() });
    }
    let gaps = &trace.gaps;
    let m = cfg.subsample.max(need).min(gaps.len());
    let sub: Vec<f64> = (0..m).map(|i| gaps[i * gaps.len() / m]).collect();

    let mut first = run_all(&sub, c, starts(gaps, c, cfg), cfg);
    first.retain(|o| o.ll.is_finite());
    first.sort_by(|a, b| b.ll.total_cmp(&a.ll));
    let seeds: Vec<Vec<f64>> = first.iter().take(cfg.polish.max(1)).map(|o| o.theta.clone()).collect();
    let mut polished = if m == gaps.len() {
        first.into_iter().take(cfg.polish.max(1)).collect()
    } else {
        run_all(gaps, c, seeds, cfg)
    };
    polished.sort_by(|a, b| b.ll.total_cmp(&a.ll));

    let mut last_err = Error::InvalidDensity;
    for o in polished.into_iter().filter(|o| o.ll.is_finite()) {
        let (r, a) = unpack(&o.theta, c);
        match PhaseTypeParams::new(r.iter().map(|x| -x).collect(), a) {
            Ok(params) => {
                return Ok(FitResult {
                    params,
                    log_likelihood: o.ll,
                    converged: o.converged,
                    n_restarts_used: cfg.restarts.max(1),
                })
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}
