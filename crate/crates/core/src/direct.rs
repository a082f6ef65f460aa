//! Direct problem: generator to phase-type parameters `(λ, A)`, survival and
//! density, and the symmetric moments `(L, S)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};
use crate::model::{qtilde_in, Generator, ModelId};
use crate::scalar::{Dd, Real, Scalar};
use crate::Error;

/// Relative eigenvalue separation below which a spectrum is degenerate.
pub const TOL_SEP: f64 = 1e-8;
/// Imaginary parts up to `TOL_IM * ‖Q̃‖` count as real.
pub const TOL_IM: f64 = 1e-10;
const MAX_COND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTypeParams<T = f64> {
    pub lambda: Vec<T>,
    #[serde(rename = "A")]
    pub a: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMoments<T = f64> {
    /// Elementary symmetric functions `L_k = e_k(λ)`, k = 1..N.
    #[serde(rename = "L")]
    pub l: Vec<T>,
    /// `S_k = Σ A_i λ_i^k`, k = 1..N-1.
    #[serde(rename = "S")]
    pub s: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub is_real_distinct: bool,
    /// One column per eigenvalue, normalised so the return-state component is 1
    /// when that component is nonzero (unit norm otherwise).
    pub eigenvectors: Vec<Vec<Complex64>>,
}

impl<T: Real> PhaseTypeParams<T> {
    /// Checks the invariants and sorts λ descending (closest to 0 first).
    pub fn new(lambda: Vec<T>, a: Vec<T>) -> Result<Self, Error> {
        if lambda.is_empty() || lambda.len() != a.len() {
            return Err(Error::InvalidParams(format!(
                "need equally many λ and A, got {} and {}",
                lambda.len(),
                a.len()
            )));
        }
        if lambda.iter().chain(&a).any(|x| !x.re().is_finite()) {
            return Err(Error::InvalidParams("non-finite entry".into()));
        }
        if lambda.iter().any(|&l| l >= T::zero()) {
            return Err(Error::InvalidParams("all λ must be negative".into()));
        }
        let sum = a.iter().fold(T::zero(), |acc, &x| acc + x);
        if (sum - T::one()).re().abs() > 1e-10 {
            return Err(Error::InvalidParams(format!("ΣA = {} differs from 1", sum.re())));
        }
        let mut pairs: Vec<(T, T)> = lambda.into_iter().zip(a).collect();
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        let p = PhaseTypeParams {
            lambda: pairs.iter().map(|x| x.0).collect(),
            a: pairs.iter().map(|x| x.1).collect(),
        };
        p.check_separation()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    fn check_separation(&self) -> Result<(), Error> {
        let scale = self.lambda.iter().map(|l| l.re().abs()).fold(0.0, f64::max);
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                let (li, lj) = (self.lambda[i].re(), self.lambda[j].re());
                if (li - lj).abs() <= TOL_SEP * scale {
                    return Err(Error::DegenerateSpectrum {
                        i,
                        j,
                        lambda_i: li,
                        lambda_j: lj,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_f64(&self) -> PhaseTypeParams<f64> {
        PhaseTypeParams {
            lambda: self.lambda.iter().map(|x| x.to_f64()).collect(),
            a: self.a.iter().map(|x| x.to_f64()).collect(),
        }
    }
}

impl PhaseTypeParams<f64> {
    pub fn to_dd(&self) -> PhaseTypeParams<Dd> {
        PhaseTypeParams {
            lambda: self.lambda.iter().map(|&x| Dd::from_f64(x)).collect(),
            a: self.a.iter().map(|&x| Dd::from_f64(x)).collect(),
        }
    }

    /// `S(t) = Σ A_i e^{λ_i t}`.
    pub fn survival(&self, t: f64) -> f64 {
        self.lambda.iter().zip(&self.a).map(|(l, a)| a * (l * t).exp()).sum()
    }

    /// `f(t) = -S'(t) = -Σ A_i λ_i e^{λ_i t}`.
    pub fn density(&self, t: f64) -> f64 {
        -self.lambda.iter().zip(&self.a).map(|(l, a)| a * l * (l * t).exp()).sum::<f64>()
    }

    /// `∫ S = -Σ A_i / λ_i`.
    pub fn mean_time(&self) -> f64 {
        -self.lambda.iter().zip(&self.a).map(|(l, a)| a / l).sum::<f64>()
    }
}

impl<T: Scalar> SymmetricMoments<T> {
    /// Moments from `(λ, A)` by the elementary-symmetric recursion.
    pub fn from_params(lambda: &[T], a: &[T]) -> Self {
        let n = lambda.len();
        let mut e = vec![T::zero(); n + 1];
        e[0] = T::one();
        for &l in lambda {
            for k in (1..=n).rev() {
                e[k] = e[k] + l * e[k - 1];
            }
        }
        let mut s = Vec::with_capacity(n.saturating_sub(1));
        let mut pw: Vec<T> = lambda.to_vec();
        for _ in 1..n {
            s.push(pw.iter().zip(a).fold(T::zero(), |acc, (&p, &ai)| acc + ai * p));
            for (p, &l) in pw.iter_mut().zip(lambda) {
                *p = *p * l;
            }
        }
        SymmetricMoments { l: e[1..].to_vec(), s }
    }

    /// Moments straight from the generator: `L` from the characteristic
    /// polynomial of Q̃ and `S_k = 1ᵀ Q̃^k e_N`. Valid for any rates,
    /// including complex spectra and nonpositive entries.
    pub fn from_rates(model: ModelId, rates: &[T]) -> Self {
        let qt = qtilde_in(model, rates);
        let n = qt.len();
        let c = linalg::charpoly(&qt);
        // det(λI - Q̃) = Σ_k (-1)^k e_k λ^{n-k}
        let l = (1..=n)
            .map(|k| if k % 2 == 0 { c[n - k] } else { -c[n - k] })
            .collect();
        let mut v = vec![T::zero(); n];
        v[n - 1] = T::one();
        let mut s = Vec::with_capacity(n - 1);
        for _ in 1..n {
            v = linalg::matvec(&qt, &v);
            s.push(v.iter().fold(T::zero(), |acc, &x| acc + x));
        }
        SymmetricMoments { l, s }
    }

    pub fn n(&self) -> usize {
        self.l.len()
    }

    /// `(L_1..L_N, S_1..S_{N-1})`.
    pub fn to_vec(&self) -> Vec<T> {
        self.l.iter().chain(&self.s).copied().collect()
    }

    /// Inverse of [`SymmetricMoments::to_vec`]; the length must be odd.
    pub fn from_slice(v: &[T]) -> Result<Self, Error> {
        if v.len() % 2 == 0 {
            return Err(Error::InvalidParams(format!(
                "moment vector length {} is not 2N-1",
                v.len()
            )));
        }
        let n = v.len().div_ceil(2);
        Ok(SymmetricMoments {
            l: v[..n].to_vec(),
            s: v[n..].to_vec(),
        })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> SymmetricMoments<U> {
        SymmetricMoments {
            l: self.l.iter().map(|&x| f(x)).collect(),
            s: self.s.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl SymmetricMoments<f64> {
    pub fn to_dd(&self) -> SymmetricMoments<Dd> {
        self.map(Dd::from_f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.l.iter().chain(&self.s).map(|x| x.abs()).fold(0.0, f64::max)
    }
}

pub fn moments<T: Scalar>(p: &PhaseTypeParams<T>) -> SymmetricMoments<T> {
    SymmetricMoments::from_params(&p.lambda, &p.a)
}

/// Complete homogeneous symmetric polynomial `h_m(λ)`.
pub fn homogeneous_symmetric(lambda: &[f64], m: usize) -> f64 {
    let mut h = vec![0.0; m + 1];
    h[0] = 1.0;
    for &l in lambda {
        for k in 1..=m {
            h[k] += l * h[k - 1];
        }
    }
    h[m]
}

fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn spectrum(gen: &Generator) -> Result<Spectrum, Error> {
    let qt = gen.qtilde();
    let n = gen.n();
    let norm = norm_inf(&qt);
    let mut eig: Vec<Complex64> = qt.clone().complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));

    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..n {
        for j in i + 1..n {
            if (eig[i] - eig[j]).norm() <= TOL_SEP * scale {
                return Err(Error::DegenerateSpectrum {
                    i,
                    j,
                    lambda_i: eig[i].re,
                    lambda_j: eig[j].re,
                });
            }
        }
    }
    let is_real_distinct = eig.iter().all(|z| z.im.abs() <= TOL_IM * norm);
    if is_real_distinct {
        let polished = polish_real_eigenvalues::<Dd>(gen, &eig.iter().map(|z| z.re).collect::<Vec<_>>());
        for (z, p) in eig.iter_mut().zip(polished) {
            *z = Complex64::new(p.re(), 0.0);
        }
    }
    let qc = qt.map(|x| Complex64::new(x, 0.0));
    let eigenvectors = eig.iter().map(|&l| eigenvector(&qc, l, gen.return_state())).collect();
    Ok(Spectrum {
        eigenvalues: eig,
        is_real_distinct,
        eigenvectors,
    })
}

/// Null vector of `Q̃ - λI` with component `s` (1-based) set to 1.
fn eigenvector(qc: &DMatrix<Complex64>, lambda: Complex64, s: usize) -> Vec<Complex64> {
    let n = qc.nrows();
    let shifted = qc - DMatrix::identity(n, n) * lambda;
    if n == 1 {
        return vec![Complex64::new(1.0, 0.0)];
    }
    let k = s - 1;
    let others: Vec<usize> = (0..n).filter(|&j| j != k).collect();
    // Drop equation k: the remaining rows determine the other components.
    let a = DMatrix::from_fn(n - 1, n - 1, |i, j| shifted[(others[i], others[j])]);
    let b = nalgebra::DVector::from_fn(n - 1, |i, _| -shifted[(others[i], k)]);
    if let Some(x) = a.lu().solve(&b) {
        if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            let mut u = vec![Complex64::new(1.0, 0.0); n];
            for (i, &j) in others.iter().enumerate() {
                u[j] = x[i];
            }
            return u;
        }
    }
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let i_min = (0..n)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap();
    v_t.row(i_min).iter().map(|z| z.conj()).collect()
}

/// Newton refinement of real eigenvalues on `det(λI - Q̃)` in precision `T`.
/// Seeds that move too far or merge are left unpolished.
fn polish_real_eigenvalues<T: Real>(gen: &Generator, seeds: &[f64]) -> Vec<T> {
    let qt: Mat<T> = gen.qtilde_in();
    let eps = 1e-31;
    let out: Vec<T> = seeds
        .iter()
        .map(|&seed| {
            let mut lam = T::from_f64(seed);
            for _ in 0..12 {
                let (tr, _) = linalg::resolvent_trace(&qt, lam);
                let Some(tr) = tr else { break };
                if tr.re() == 0.0 || !tr.re().is_finite() {
                    break;
                }
                let step = T::one() / tr;
                lam = lam - step;
                if step.re().abs() <= eps * lam.re().abs() {
                    break;
                }
            }
            lam
        })
        .collect();
    let scale = seeds.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let moved_far = out
        .iter()
        .zip(seeds)
        .any(|(p, s)| (p.re() - s).abs() > 1e-6 * scale || !p.re().is_finite());
    let merged = (0..out.len())
        .any(|i| (i + 1..out.len()).any(|j| (out[i].re() - out[j].re()).abs() <= TOL_SEP * scale));
    if moved_far || merged {
        seeds.iter().map(|&s| T::from_f64(s)).collect()
    } else {
        out
    }
}

/// `(λ, A)` computed in precision `T`: eigenvalues polished in `T` and
/// amplitudes from the cofactor formula
/// `A_i = -k_exit D(λ_i) / (λ_i Π_{j≠i}(λ_i - λ_j))`, where `D` is the
/// determinant of `λI - Q̃` with row and column N removed.
pub fn phase_type_params_in<T: Real>(gen: &Generator) -> Result<PhaseTypeParams<T>, Error> {
    let spec = spectrum(gen)?;
    if !spec.is_real_distinct {
        let imag = spec.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        return Err(Error::ComplexSpectrum { imag });
    }
    let seeds: Vec<f64> = spec.eigenvalues.iter().map(|z| z.re).collect();
    let lambda: Vec<T> = polish_real_eigenvalues(gen, &seeds);
    let a = cofactor_amplitudes(gen, &lambda);
    PhaseTypeParams::new(lambda, a)
}

fn cofactor_amplitudes<T: Real>(gen: &Generator, lambda: &[T]) -> Vec<T> {
    let qt: Mat<T> = gen.qtilde_in();
    let n = qt.len();
    let sub = linalg::minor(&qt, n - 1, n - 1);
    let k = T::from_f64(gen.exit_rate());
    lambda
        .iter()
        .enumerate()
        .map(|(i, &li)| {
            let shifted: Mat<T> = sub
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(c, &v)| if r == c { li - v } else { -v })
                        .collect()
                })
                .collect();
            let d = linalg::det(shifted);
            let prod = lambda
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(T::one(), |acc, (_, &lj)| acc * (li - lj));
            -k * d / (li * prod)
        })
        .collect()
}

/// Amplitudes by the eigenvector route: solve `U C = e_N` and set
/// `A_i = -k_exit C_i / λ_i`. Returns the amplitudes and the condition number
/// of `U`.
pub fn linear_solve_amplitudes(gen: &Generator) -> Result<(Vec<f64>, f64), Error> {
    let spec = spectrum(gen)?;
    if !spec.is_real_distinct {
        let imag = spec.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        return Err(Error::ComplexSpectrum { imag });
    }
    let n = gen.n();
    let u = DMatrix::from_fn(n, n, |i, j| spec.eigenvectors[j][i].re);
    let sv = u.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_COND) {
        return Err(Error::IllConditioned { cond });
    }
    let mut e = nalgebra::DVector::zeros(n);
    e[n - 1] = 1.0;
    let c = u.lu().solve(&e).ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let k = gen.exit_rate();
    let a = (0..n).map(|i| -k * c[i] / spec.eigenvalues[i].re).collect();
    Ok((a, cond))
}

/// `(λ, A)` in f64. Computed in double-double and rounded; the eigenvector
/// route is checked for conditioning.
pub fn phase_type_params(gen: &Generator) -> Result<PhaseTypeParams, Error> {
    let p = phase_type_params_in::<Dd>(gen)?.to_f64();
    linear_solve_amplitudes(gen)?;
    Ok(p)
}

/// Largest disagreement between the cofactor and eigenvector amplitude
/// routes, relative to `max |A|`.
pub fn amplitude_disagreement(gen: &Generator) -> Result<f64, Error> {
    let p = phase_type_params_in::<Dd>(gen)?.to_f64();
    let (a_lin, _) = linear_solve_amplitudes(gen)?;
    let scale = p.a.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(p.a
        .iter()
        .zip(&a_lin)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeGrid {
    Linear { t_max: f64, points: usize },
    Log { t_min: f64, t_max: f64, points: usize },
}

impl TimeGrid {
    /// A linear grid reaching ~7 time constants of the slowest mode.
    pub fn default_for(p: &PhaseTypeParams) -> Self {
        let slowest = p.lambda.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
        TimeGrid::Linear {
            t_max: 7.0 / slowest,
            points: 200,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match *self {
            TimeGrid::Linear { t_max, points } => {
                let m = points.max(2) - 1;
                (0..=m).map(|i| t_max * i as f64 / m as f64).collect()
            }
            TimeGrid::Log { t_min, t_max, points } => {
                let m = points.max(2) - 1;
                let (a, b) = (t_min.ln(), t_max.ln());
                (0..=m).map(|i| (a + (b - a) * i as f64 / m as f64).exp()).collect()
            }
        }
    }
}

/// CSV with header `t,S,f`, 17 significant digits.
pub fn survival_csv(p: &PhaseTypeParams, grid: &TimeGrid) -> String {
    let mut out = String::from("t,S,f\n");
    for t in grid.points() {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", t, p.survival(t), p.density(t)));
    }
    out
}
