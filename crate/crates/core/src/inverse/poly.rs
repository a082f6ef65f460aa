//! Sparse integer-coefficient polynomials in the ten variables
//! `k1..k5, L1, L2, L3, S1, S2` of the three-state inverse problem.

use crate::scalar::Scalar;

pub const N_VARS: usize = 10;
pub const VAR_NAMES: [&str; N_VARS] = ["k1", "k2", "k3", "k4", "k5", "L1", "L2", "L3", "S1", "S2"];
/// Index of `L1` in the variable order; `L1..S2` occupy `V0..V0+5`.
pub const V0: usize = 5;

pub type Exponents = [u8; N_VARS];

pub fn var_index(name: &str) -> Option<usize> {
    VAR_NAMES.iter().position(|&v| v == name)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    pub terms: Vec<(i64, Exponents)>,
}

fn pow<T: Scalar>(x: T, e: u8) -> T {
    (0..e).fold(T::one(), |acc, _| acc * x)
}

fn monomial<T: Scalar>(e: &Exponents, x: &[T; N_VARS], skip: Option<usize>) -> T {
    e.iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .fold(T::one(), |acc, (i, &ei)| acc * pow(x[i], ei))
}

impl Poly {
    pub fn involves(&self, var: usize) -> bool {
        self.terms.iter().any(|(_, e)| e[var] > 0)
    }

    pub fn degree_in(&self, var: usize) -> u8 {
        self.terms.iter().map(|(_, e)| e[var]).max().unwrap_or(0)
    }

    /// True when only `L1..S2` occur.
    pub fn is_v_only(&self) -> bool {
        (0..V0).all(|i| !self.involves(i))
    }

    pub fn eval<T: Scalar>(&self, x: &[T; N_VARS]) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |acc, (c, e)| acc + T::from_f64(*c as f64) * monomial(e, x, None))
    }

    /// Value and `Σ |term|` at `x`; the latter is the scale of the vanishing test.
    pub fn eval_scaled(&self, x: &[f64; N_VARS]) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |(v, s), (c, e)| {
            let t = *c as f64 * monomial(e, x, None);
            (v + t, s + t.abs())
        })
    }

    /// Coefficients of the polynomial as a univariate one in `var`, evaluated
    /// at `x` (the entry `x[var]` is ignored). Index `d` holds degree `d`.
    pub fn coeffs_in<T: Scalar>(&self, var: usize, x: &[T; N_VARS]) -> Vec<T> {
        let mut c = vec![T::zero(); self.degree_in(var) as usize + 1];
        for (ci, e) in &self.terms {
            let d = e[var] as usize;
            c[d] = c[d] + T::from_f64(*ci as f64) * monomial(e, x, Some(var));
        }
        c
    }
}

impl std::fmt::Display for Poly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (c, e)) in self.terms.iter().enumerate() {
            match (n, *c < 0) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mut parts = Vec::new();
            if c.abs() != 1 || e.iter().all(|&x| x == 0) {
                parts.push(c.abs().to_string());
            }
            for (i, &ei) in e.iter().enumerate() {
                match ei {
                    0 => {}
                    1 => parts.push(VAR_NAMES[i].to_string()),
                    _ => parts.push(format!("{}^{}", VAR_NAMES[i], ei)),
                }
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}
