//! Rates of an unbranched chain `1 ⇄ 2 ⇄ … ⇄ N → exit` from `(λ, A)`.
//!
//! Rate layout: `(k1+, …, k_{N-1}+, k1-, …, k_{N-1}-, k_N)`. The exit rate is
//! `k_N = -Σ A_j λ_j`. With `C_j = -A_j λ_j / k_N` and `u_n(λ)` the
//! eigenvector component of state n (`u_N = 1`), each step s = 1..N-1 recovers
//! the pair at t = N - s: `k_t-` from the component t+1 of `Q̃^s e_N`, which is
//! affine in `k_t-`, then `k_t+` from `Σ_j w_t(λ_j) λ_j^s C_j = k_t- ⋯ k_{N-1}-`
//! with `w_t = k_t+ u_t`.

use super::{Branch, InverseSolution};
use crate::direct::{moments, PhaseTypeParams};
use crate::linalg;
use crate::model::{qtilde_in, ModelId};
use crate::scalar::{Dd, Real, Scalar};
use crate::Error;

const PIVOT_TOL: f64 = 1e-12;

/// The recursion in precision `T`; returns the rate vector.
pub fn invert_unbranched_in<T: Real>(n: usize, p: &PhaseTypeParams<T>) -> Result<Vec<T>, Error> {
    if n == 0 || p.n() != n {
        return Err(Error::InvalidParams(format!(
            "chain of {n} states needs {n} exponentials, got {}",
            p.n()
        )));
    }
    let (lam, a) = (&p.lambda, &p.a);
    // x counts as zero when it is lost in the cancellation of terms of total size `mag`
    let small = |x: T, mag: f64| x.re().abs() <= PIVOT_TOL * mag;
    let sum = |f: &dyn Fn(usize) -> T| (0..n).fold(T::zero(), |acc, j| acc + f(j));
    let abs_sum = |f: &dyn Fn(usize) -> T| (0..n).map(|j| f(j).re().abs()).sum::<f64>();

    let k_n = -sum(&|j| a[j] * lam[j]);
    if small(k_n, abs_sum(&|j| a[j] * lam[j])) {
        return Err(Error::ZeroPivot("exit rate".into()));
    }
    let c: Vec<T> = (0..n).map(|j| -a[j] * lam[j] / k_n).collect();
    let mut kp = vec![T::zero(); n - 1];
    let mut km = vec![T::zero(); n - 1];
    // u[m][j] = u_{m+1}(λ_j); rows are filled from the bottom up
    let mut u = vec![vec![T::zero(); n]; n];
    u[n - 1] = vec![T::one(); n];
    let mut lam_s: Vec<T> = vec![T::one(); n];
    let chain = ModelId::UnbranchedChain(n);

    for s in 1..n {
        for (ls, &l) in lam_s.iter_mut().zip(lam) {
            *ls = *ls * l;
        }
        let t = n - 1 - s;
        let row = t + 1;
        let lhs_b = sum(&|j| u[row][j] * lam_s[j] * c[j]);
        // component `row` of Q̃^s e_N with k_t- = x; `abs` uses |Q̃| for a magnitude bound
        let coord = |x: T, abs: bool| {
            let mut rates: Vec<T> = kp.iter().chain(&km).copied().collect();
            rates.push(k_n);
            rates[n - 1 + t] = x;
            let mut qt = qtilde_in(chain, &rates);
            if abs {
                qt.iter_mut().flatten().for_each(|q| *q = q.abs());
            }
            let mut v = vec![T::zero(); n];
            v[n - 1] = T::one();
            for _ in 0..s {
                v = linalg::matvec(&qt, &v);
            }
            v[row]
        };
        let c0 = coord(T::zero(), false);
        let slope = coord(T::one(), false) - c0;
        if small(slope, (coord(T::one(), true) - coord(T::zero(), true)).re()) {
            return Err(Error::ZeroPivot(format!("slope for k{}-", t + 1)));
        }
        let num = lhs_b - c0;
        if small(num, abs_sum(&|j| u[row][j] * lam_s[j] * c[j]) + c0.re().abs()) {
            return Err(Error::ZeroPivot(format!("k{}-", t + 1)));
        }
        km[t] = num / slope;

        let w: Vec<T> = (0..n)
            .map(|j| {
                if t == n - 2 {
                    k_n + km[t] + lam[j]
                } else {
                    (kp[t + 1] + km[t] + lam[j]) * u[t + 1][j] - km[t + 1] * u[t + 2][j]
                }
            })
            .collect();
        let lhs_a = sum(&|j| w[j] * lam_s[j] * c[j]);
        if small(lhs_a, abs_sum(&|j| w[j] * lam_s[j] * c[j])) {
            return Err(Error::ZeroPivot(format!("k{}+", t + 1)));
        }
        let prod = km[t..].iter().fold(T::one(), |acc, &x| acc * x);
        kp[t] = lhs_a / prod;
        u[t] = w.iter().map(|&x| x / kp[t]).collect();
    }
    let mut rates = kp;
    rates.extend(km);
    rates.push(k_n);
    Ok(rates)
}

pub fn invert_unbranched(n: usize, p: &PhaseTypeParams) -> Result<InverseSolution, Error> {
    invert_unbranched_dd(n, &p.to_dd())
}

/// The recursion in double-double; rates are rounded to f64.
pub fn invert_unbranched_dd(n: usize, p: &PhaseTypeParams<Dd>) -> Result<InverseSolution, Error> {
    let rates = invert_unbranched_in(n, p)?.iter().map(|x| x.re()).collect();
    let branch = Branch { system: 1, roots: Vec::new() };
    Ok(InverseSolution::new(ModelId::UnbranchedChain(n), rates, branch, Vec::new(), &moments(p)))
}
