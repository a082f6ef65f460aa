//! Closed-form solutions on the generic stratum of each catalog model.
//!
//! Notation: `v = (L1, L2, L3, S1, S2)`,
//! `H = L1 S1 S2 - L2 S1² + L3 S1 - S2²`,
//! `D = L1² S1² - 2 L1 S1 S2 - 4 L3 S1 + S2²` (discriminant of the quadratic
//! leader of M4, M8 and M9), `b = L1 S1 - S2`.

use super::{vanishes, Branch, InverseSolution, InvertOptions};
use crate::direct::SymmetricMoments;
use crate::model::{ModelId, RateVector};
use crate::scalar::{Dd, Scalar};
use crate::Error;

fn v_of<T: Scalar>(m: &SymmetricMoments<T>) -> Result<[T; 5], Error> {
    if m.n() != 3 || m.s.len() != 2 {
        return Err(Error::InvalidParams(format!(
            "three-state models need (L1,L2,L3,S1,S2), got {} states",
            m.n()
        )));
    }
    Ok([m.l[0], m.l[1], m.l[2], m.s[0], m.s[1]])
}

fn check_catalog(model: ModelId) -> Result<(), Error> {
    if model.is_catalog() {
        Ok(())
    } else {
        Err(Error::Unsupported("closed forms exist for M2, M3, M4, M8 and M9 only"))
    }
}

/// Rates `(k1, ..., k5)` on the generic branch of `model`, evaluated in any
/// scalar type. `root = +1` takes `-(b + √D) / (2 S1)` for the quadratic
/// leader, `root = -1` the other root; M2 ignores it. Conditions are not
/// checked here (see [`generic_conditions`]); with complex `T` a negative
/// discriminant gives the conjugate pair.
pub fn closed_form<T: Scalar>(model: ModelId, v: &[T; 5], root: i8) -> Result<[T; 5], Error> {
    let [l1, l2, l3, s1, s2] = *v;
    let c = T::from_f64;
    let h = l1 * s1 * s2 - l2 * s1 * s1 + l3 * s1 - s2 * s2;
    let b = l1 * s1 - s2;
    let quad = || {
        let d = l1 * l1 * s1 * s1 - c(2.0) * l1 * s1 * s2 - c(4.0) * l3 * s1 + s2 * s2;
        let sq = if root >= 0 { d.sqrt() } else { -d.sqrt() };
        -(b + sq) / (c(2.0) * s1)
    };
    let k5 = -s1;
    let k = match model {
        ModelId::M2 => {
            let num = l1 * l1 * s1 * s1 * s1 * s2
                + l2 * l2 * s1 * s1 * s1
                + s1 * s2 * s2 * s2
                + l3 * l3 * s1
                + (-c(2.0) * s1 * s1 * s2 * s2 + (-s1 * s1 * s1 * s1 - s1 * s1 * s2) * l2
                    + (s1 * s1 * s1 + s1 * s2) * l3)
                    * l1
                + (s1 * s1 * s1 * s2 - c(2.0) * l3 * s1 * s1 + s1 * s2 * s2) * l2
                + (s1 * s1 * s1 * s1 - c(3.0) * s1 * s1 * s2) * l3;
            let den = -s1 * s1 * s2 * s2
                + s2 * s2 * s2
                + (s1 * s1 * s1 * s2 - s1 * s2 * s2) * l1
                + (-s1 * s1 * s1 * s1 + s1 * s1 * s2) * l2
                + (s1 * s1 * s1 - s1 * s2) * l3;
            let k1 = -num / den;
            let k3 = (s1 * s1 - s2) * l3 / h;
            let k2 = h / (s1 * s1 * s1 - s1 * s2);
            let k4 = (s1 * s1 - s2) / s1;
            [k1, k2, k3, k4, k5]
        }
        ModelId::M4 => {
            let k4 = (s1 * s1 - s2) / s1;
            let k3 = quad();
            let k2 = h / (s1 * s1 * s1 - s1 * s2);
            let k1 = (-l1 * s1 * s1 + l2 * s1 + s1 * s2 - (s1 * s1 - s2) * k3 - l3) / (s1 * s1 - s2);
            [k1, k2, k3, k4, k5]
        }
        ModelId::M8 => {
            let k2 = quad();
            let k4 = h / (k2 * s1 * s1);
            let k3 = -(-s1 * s1 * s1 * k2 + h + s1 * s2 * k2) / (k2 * s1 * s1);
            let k1 = l3 / (s1 * k2);
            [k1, k2, k3, k4, k5]
        }
        ModelId::M9 => {
            let k2 = quad();
            let den = c(2.0) * k2 * s1 + b;
            let k4 = (l1 * s1 * s1 + s1 * s1 * k2 - l2 * s1 - s1 * s2 - s2 * k2 + l3) / den;
            let k1 = -(k2 * s1 + b) / s1;
            let k3 = -(-s1 * s1 * s1 * k2 + h + s1 * s2 * k2) / (s1 * den);
            [k1, k2, k3, k4, k5]
        }
        ModelId::M3 => {
            return Err(Error::Unsupported("M3 has a one-parameter family of solutions; use m3_family"))
        }
        ModelId::UnbranchedChain(_) => return Err(Error::Unsupported("use invert_unbranched for chains")),
    };
    Ok(k)
}

/// Checks the conditions of the generic branch of `model` at `v` with the
/// relative band `tol`.
pub fn generic_conditions(model: ModelId, v: &[f64; 5], tol: f64) -> Result<(), Error> {
    check_catalog(model)?;
    let [l1, l2, l3, s1, s2] = *v;
    let h = [l1 * s1 * s2, -l2 * s1 * s1, l3 * s1, -s2 * s2];
    let s1_cubed_minus = [s1 * s1 * s1, -s1 * s2];
    let nonzero = |name: &str, terms: &[f64]| {
        if vanishes(terms, tol) {
            Err(Error::GenericBranchMiss(format!("{name} vanishes")))
        } else {
            Ok(())
        }
    };
    let positive_discriminant = || {
        let d = [l1 * l1 * s1 * s1, -2.0 * l1 * s1 * s2, -4.0 * l3 * s1, s2 * s2];
        if vanishes(&d, tol) {
            return Err(Error::GenericBranchMiss("discriminant vanishes".into()));
        }
        let dv: f64 = d.iter().sum();
        if dv < 0.0 {
            return Err(Error::NegativeDiscriminant(dv));
        }
        Ok(())
    };
    match model {
        ModelId::M2 => {
            nonzero("L1 S1 S2 - L2 S1^2 + L3 S1 - S2^2", &h)?;
            nonzero("S1^3 - S1 S2", &s1_cubed_minus)?;
            nonzero("S2", &[s2])
        }
        ModelId::M3 => {
            if !vanishes(&h, tol) {
                return Err(Error::M3HypersurfaceMiss(h.iter().sum()));
            }
            nonzero("S1", &[s1])?;
            nonzero("S2", &[s2])
        }
        ModelId::M4 => {
            nonzero("L3", &[l3])?;
            nonzero("S1^3 - S1 S2", &s1_cubed_minus)?;
            nonzero("S2", &[s2])?;
            positive_discriminant()
        }
        ModelId::M8 | ModelId::M9 => {
            nonzero("L3", &[l3])?;
            nonzero("S1", &[s1])?;
            positive_discriminant()
        }
        ModelId::UnbranchedChain(_) => unreachable!(),
    }
}

/// The solution family of M3: k3 is free (nonzero), the other rates follow.
#[derive(Clone, Debug, PartialEq)]
pub struct M3Family {
    v: [Dd; 5],
}

impl M3Family {
    pub fn at_in<T: Scalar>(v: &[T; 5], k3: T) -> [T; 5] {
        let [_, l2, l3, s1, s2] = *v;
        let k5 = -s1;
        let k4 = (s1 * s1 - s2) / s1;
        let k2 = l3 / (k3 * s1);
        let k1 = -(k3 * k3 * s1 * s2 + l3 * s2 + (l2 * s1 * s1 - l3 * s1) * k3) / (k3 * s1 * s2);
        [k1, k2, k3, k4, k5]
    }

    /// Family member with the given k3.
    pub fn at(&self, k3: f64) -> RateVector {
        Self::at_in(&self.v, Dd::from_f64(k3)).iter().map(|x| x.re()).collect()
    }
}

/// The M3 family for moments on its hypersurface `H = 0`.
pub fn m3_family(m: &SymmetricMoments, tol: f64) -> Result<M3Family, Error> {
    m3_family_dd(&m.to_dd(), tol)
}

pub fn m3_family_dd(m: &SymmetricMoments<Dd>, tol: f64) -> Result<M3Family, Error> {
    let v = v_of(m)?;
    generic_conditions(ModelId::M3, &v.map(|x| x.re()), tol)?;
    Ok(M3Family { v })
}

pub fn invert_generic(model: ModelId, m: &SymmetricMoments) -> Result<Vec<InverseSolution>, Error> {
    invert_generic_with(model, m, &InvertOptions::default())
}

pub fn invert_generic_with(
    model: ModelId,
    m: &SymmetricMoments,
    opts: &InvertOptions,
) -> Result<Vec<InverseSolution>, Error> {
    invert_generic_dd(model, &m.to_dd(), opts)
}

/// Generic inversion with moments given in double-double; the formulas are
/// evaluated in double-double and the rates rounded.
pub fn invert_generic_dd(
    model: ModelId,
    m: &SymmetricMoments<Dd>,
    opts: &InvertOptions,
) -> Result<Vec<InverseSolution>, Error> {
    check_catalog(model)?;
    let v = v_of(m)?;
    generic_conditions(model, &v.map(|x| x.re()), opts.tol)?;
    let round = |k: [Dd; 5]| k.iter().map(|x| x.re()).collect::<RateVector>();
    let sol = |rates, roots, free| InverseSolution::new(model, rates, Branch { system: 1, roots }, free, m);
    Ok(match model {
        ModelId::M2 => vec![sol(round(closed_form(model, &v, 1)?), vec![], vec![])],
        ModelId::M3 => opts
            .free_grid
            .iter()
            .filter(|&&k3| k3 != 0.0)
            .map(|&k3| {
                let k = M3Family::at_in(&v, Dd::from_f64(k3));
                sol(round(k), vec![], vec![("k3".to_string(), k3)])
            })
            .collect(),
        _ => [1i8, -1]
            .iter()
            .map(|&r| Ok(sol(round(closed_form(model, &v, r)?), vec![r], vec![])))
            .collect::<Result<_, Error>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::{phase_type_params, moments};
    use crate::inverse::{rel_dev, DEFAULT_TOL};
    use crate::model::Generator;
    use proptest::prelude::*;

    fn m9_example() -> SymmetricMoments {
        SymmetricMoments::from_slice(&[-15.0, 27.0, -10.0, -5.0, 60.0]).unwrap()
    }

    fn forward(model: ModelId, rates: &[f64]) -> SymmetricMoments {
        moments(&phase_type_params(&Generator::new(model, rates).unwrap()).unwrap())
    }

    #[test]
    fn m9_example_has_two_mirror_solutions() {
        let sols = invert_generic(ModelId::M9, &m9_example()).unwrap();
        assert_eq!(sols.len(), 2);
        assert!(rel_dev(&sols[0].rates, &[1.0, 2.0, 3.0, 4.0, 5.0]) < 1e-14);
        assert!(rel_dev(&sols[1].rates, &[2.0, 1.0, 4.0, 3.0, 5.0]) < 1e-14);
        assert_eq!(sols[0].branch, Branch { system: 1, roots: vec![1] });
        for s in &sols {
            assert!(s.residual < 1e-12 && s.is_valid());
            // independent check through the generator
            let m = SymmetricMoments::from_rates(ModelId::M9, &s.rates);
            assert!(rel_dev(&m.to_vec(), &m9_example().to_vec()) < 1e-12);
        }
    }

    #[test]
    fn m8_on_the_same_moments() {
        // k2 solves -5 k² + 15 k - 10 = 0; H = 275
        let sols = invert_generic(ModelId::M8, &m9_example()).unwrap();
        assert!(rel_dev(&sols[0].rates, &[1.0, 2.0, 1.5, 5.5, 5.0]) < 1e-14);
        assert!(rel_dev(&sols[1].rates, &[2.0, 1.0, -4.0, 11.0, 5.0]) < 1e-14);
        assert!(!sols[0].nonpositive && sols[1].nonpositive);
        assert!(sols[1].residual < 1e-12);
    }

    #[test]
    fn m2_roundtrip_is_unique() {
        let rates = [1.0, 2.0, 1.5, 0.5, 3.0];
        let m = forward(ModelId::M2, &rates);
        let sols = invert_generic(ModelId::M2, &m).unwrap();
        assert_eq!(sols.len(), 1);
        assert!(sols[0].rel_err(&rates) < 1e-10, "{:?}", sols[0].rates);
    }

    #[test]
    fn exit_and_k4_contracts() {
        let m = m9_example();
        for s in invert_generic(ModelId::M9, &m).unwrap() {
            assert_eq!(s.rates[4], 5.0);
        }
        let (s1, s2) = (m.s[0], m.s[1]);
        for model in [ModelId::M2, ModelId::M4] {
            let m = forward(model, &[1.0, 2.0, 1.5, 0.5, 3.0]);
            let (s1, s2) = (m.s[0], m.s[1]);
            for s in invert_generic(model, &m).unwrap() {
                assert!((s.rates[3] - (s1 * s1 - s2) / s1).abs() < 1e-12);
                assert!((s.rates[4] + s1).abs() < 1e-12);
            }
        }
        assert_eq!((s1 * s1 - s2) / s1, 7.0);
    }

    #[test]
    fn condition_errors() {
        assert!(matches!(
            invert_generic(ModelId::M3, &m9_example()),
            Err(Error::M3HypersurfaceMiss(h)) if h == 275.0
        ));
        // D = 4 L3 = -4
        let neg = SymmetricMoments::from_slice(&[-1.0, 1.0, -1.0, -1.0, 1.0]).unwrap();
        assert!(matches!(invert_generic(ModelId::M9, &neg), Err(Error::NegativeDiscriminant(d)) if d == -4.0));
        let s2_zero = SymmetricMoments::from_slice(&[-6.0, 11.0, -6.0, -2.0, 0.0]).unwrap();
        assert!(matches!(invert_generic(ModelId::M2, &s2_zero), Err(Error::GenericBranchMiss(_))));
        assert!(invert_generic(ModelId::UnbranchedChain(3), &m9_example()).is_err());
    }

    #[test]
    fn m3_family_members_share_moments() {
        let rates = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = SymmetricMoments::from_rates(ModelId::M3, &rates);
        let fam = m3_family(&m, 1e-9).unwrap();
        let back = fam.at(3.0);
        assert!(rel_dev(&back, &rates) < 1e-13, "{back:?}");
        let sols = invert_generic(ModelId::M3, &m).unwrap();
        assert_eq!(sols.len(), 3);
        for s in &sols {
            assert!(s.residual < 1e-12);
            assert_eq!(s.free_params[0].0, "k3");
        }
    }

    #[test]
    fn complex_evaluation_gives_conjugates() {
        use num_complex::Complex64;
        let v = [-1.0, 1.0, -1.0, -1.0, 1.0].map(Complex64::from_f64);
        let a = closed_form(ModelId::M9, &v, 1).unwrap();
        let b = closed_form(ModelId::M9, &v, -1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y.conj()).norm() < 1e-12);
        }
        assert!(a[1].im.abs() > 0.1);
    }

    fn log_uniform() -> impl Strategy<Value = f64> {
        (-2.0f64..2.0).prop_map(|e| 10f64.powf(e))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn original_rates_are_recovered(
            model in prop::sample::select(vec![ModelId::M2, ModelId::M4, ModelId::M8, ModelId::M9]),
            rates in prop::collection::vec(log_uniform(), 5),
        ) {
            let gen = Generator::new(model, &rates).unwrap();
            let Ok(p) = crate::direct::phase_type_params_in::<Dd>(&gen) else { return Ok(()) };
            let m = crate::direct::moments(&p);
            let v = [m.l[0], m.l[1], m.l[2], m.s[0], m.s[1]].map(|x| x.re());
            // draws with D inside the vanishing band belong to a degenerate stratum
            prop_assume!(generic_conditions(model, &v, DEFAULT_TOL).is_ok());
            let sols = invert_generic_dd(model, &m, &InvertOptions::default()).unwrap();
            prop_assert_eq!(sols.len(), if model == ModelId::M2 { 1 } else { 2 });
            let best = sols.iter().map(|s| s.rel_err(&rates)).fold(f64::INFINITY, f64::min);
            prop_assert!(best < 1e-8, "{:?} {:?} best {}", model, rates, best);
        }

        #[test]
        fn m3_family_members_agree(rates in prop::collection::vec(log_uniform(), 5), k3 in log_uniform()) {
            let rd: Vec<Dd> = rates.iter().map(|&x| Dd::from_f64(x)).collect();
            let m = SymmetricMoments::from_rates(ModelId::M3, &rd);
            let fam = m3_family_dd(&m, 1e-9).unwrap();
            let v = [m.l[0], m.l[1], m.l[2], m.s[0], m.s[1]];
            let r = M3Family::at_in(&v, Dd::from_f64(k3));
            let m2 = SymmetricMoments::from_rates(ModelId::M3, &r);
            let got: Vec<f64> = m2.to_vec().iter().map(|x| x.re()).collect();
            let target: Vec<f64> = m.to_vec().iter().map(|x| x.re()).collect();
            prop_assert!(rel_dev(&got, &target) < 1e-12, "{:?} vs {:?}", got, target);
            prop_assert_eq!(fam.at(k3), r.iter().map(|x| x.re()).collect::<Vec<_>>());
        }
    }
}
