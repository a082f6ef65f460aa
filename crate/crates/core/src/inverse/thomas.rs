//! Solving through stored Thomas decompositions.
//!
//! Each catalog model's polynomial system in `(k, v)` splits into a disjoint
//! union of simple systems: triangular sets of equations and inequations with
//! pairwise distinct leaders under a fixed ranking. The systems are read from
//! `data/thomas/<model>.txt`; a relation line reads
//! `EQ|NEQ; leader; (coeff,[e1,...,e10]) ...` with exponents in the order
//! `k1 k2 k3 k4 k5 L1 L2 L3 S1 S2`.

use std::sync::OnceLock;

use super::poly::{var_index, Exponents, Poly, N_VARS, V0, VAR_NAMES};
use super::{Branch, InverseSolution, InvertOptions};
use crate::direct::SymmetricMoments;
use crate::model::ModelId;
use crate::scalar::{Dd, Real, Scalar};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationKind {
    Equation,
    Inequation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub kind: RelationKind,
    /// Variable index in `k1..k5, L1, L2, L3, S1, S2`.
    pub leader: usize,
    pub poly: Poly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimpleSystem {
    pub model: ModelId,
    /// 1-based position in the model's list.
    pub index: usize,
    pub relations: Vec<Relation>,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub model: ModelId,
    /// Variables from highest to lowest rank.
    pub ranking: [usize; N_VARS],
    pub systems: Vec<SimpleSystem>,
}

const FILES: [(ModelId, &str); 5] = [
    (ModelId::M2, include_str!("../../data/thomas/m2.txt")),
    (ModelId::M3, include_str!("../../data/thomas/m3.txt")),
    (ModelId::M4, include_str!("../../data/thomas/m4.txt")),
    (ModelId::M8, include_str!("../../data/thomas/m8.txt")),
    (ModelId::M9, include_str!("../../data/thomas/m9.txt")),
];

/// Raw text of the data file for `model`.
pub fn data_file(model: ModelId) -> Option<&'static str> {
    FILES.iter().find(|(m, _)| *m == model).map(|(_, t)| *t)
}

/// Hex SHA-256 of the data file for `model`.
pub fn data_sha256(model: ModelId) -> Option<String> {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(data_file(model)?.as_bytes());
    Some(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// The decomposition of a catalog model, parsed and checked once.
pub fn decomposition(model: ModelId) -> Result<&'static Decomposition, Error> {
    static CACHE: OnceLock<Vec<Decomposition>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        FILES
            .iter()
            .map(|(_, text)| parse(text).unwrap_or_else(|e| panic!("bundled Thomas data is corrupt: {e}")))
            .collect()
    });
    all.iter()
        .find(|d| d.model == model)
        .ok_or(Error::Unsupported("Thomas decompositions exist for M2, M3, M4, M8 and M9 only"))
}

fn data_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("line {line}: {msg}"))
}

fn parse_terms(s: &str, line: usize) -> Result<Vec<(i64, Exponents)>, Error> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let body_end = rest.find("])").ok_or_else(|| data_err(line, "unterminated term"))?;
        let body = rest
            .get(1..body_end)
            .filter(|_| rest.starts_with('('))
            .ok_or_else(|| data_err(line, "term must start with '('"))?;
        let (coeff, exps) = body.split_once(",[").ok_or_else(|| data_err(line, "bad term"))?;
        let coeff: i64 = coeff.trim().parse().map_err(|e| data_err(line, e))?;
        let exps: Vec<u8> = exps
            .split(',')
            .map(|x| x.trim().parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|e| data_err(line, e))?;
        let exps: Exponents = exps
            .try_into()
            .map_err(|_| data_err(line, format!("need {N_VARS} exponents")))?;
        out.push((coeff, exps));
        rest = rest[body_end + 2..].trim_start();
    }
    Ok(out)
}

/// Parses one data file and checks its structure: the stored leader is the
/// highest-ranked variable present, leaders are pairwise distinct within a
/// system and every unknown-rate leader occurs at most quadratically.
pub fn parse(text: &str) -> Result<Decomposition, Error> {
    let mut model = None;
    let mut ranking: Option<[usize; N_VARS]> = None;
    let mut systems: Vec<SimpleSystem> = Vec::new();
    let mut current: Option<SimpleSystem> = None;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(m) = line.strip_prefix("MODEL ") {
            model = Some(m.trim().parse::<ModelId>().map_err(|e| data_err(ln, e))?);
        } else if let Some(r) = line.strip_prefix("RANKING ") {
            let idx: Vec<usize> = r
                .split_whitespace()
                .map(|v| var_index(v).ok_or_else(|| data_err(ln, format!("unknown variable {v}"))))
                .collect::<Result<_, _>>()?;
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            if sorted != (0..N_VARS).collect::<Vec<_>>() {
                return Err(data_err(ln, "ranking must list every variable once"));
            }
            ranking = Some(idx.try_into().unwrap());
        } else if let Some(i) = line.strip_prefix("SYSTEM ") {
            let index: usize = i.trim().parse().map_err(|e| data_err(ln, e))?;
            if index != systems.len() + 1 || current.is_some() {
                return Err(data_err(ln, "systems must be numbered 1, 2, ... and closed by END"));
            }
            let model = model.ok_or_else(|| data_err(ln, "MODEL missing"))?;
            current = Some(SimpleSystem { model, index, relations: Vec::new() });
        } else if line == "END" {
            let sys = current.take().ok_or_else(|| data_err(ln, "END without SYSTEM"))?;
            check_triangular(&sys).map_err(|e| data_err(ln, e))?;
            systems.push(sys);
        } else {
            let sys = current.as_mut().ok_or_else(|| data_err(ln, "relation outside SYSTEM"))?;
            let ranking = ranking.ok_or_else(|| data_err(ln, "RANKING missing"))?;
            let mut parts = line.splitn(3, ';');
            let kind = match parts.next().map(str::trim) {
                Some("EQ") => RelationKind::Equation,
                Some("NEQ") => RelationKind::Inequation,
                other => return Err(data_err(ln, format!("bad kind {other:?}"))),
            };
            let leader_name = parts.next().map(str::trim).unwrap_or("");
            let leader = var_index(leader_name).ok_or_else(|| data_err(ln, format!("bad leader {leader_name}")))?;
            let poly = Poly { terms: parse_terms(parts.next().unwrap_or(""), ln)? };
            let computed = ranking.iter().copied().find(|&v| poly.involves(v));
            if computed != Some(leader) {
                return Err(data_err(ln, format!("stored leader {leader_name} is not the computed leader")));
            }
            if leader < V0 && poly.degree_in(leader) > 2 {
                return Err(data_err(ln, "leader degree exceeds 2"));
            }
            sys.relations.push(Relation { kind, leader, poly });
        }
    }
    if current.is_some() {
        return Err(Error::Data("last system not closed by END".into()));
    }
    Ok(Decomposition {
        model: model.ok_or_else(|| Error::Data("MODEL missing".into()))?,
        ranking: ranking.ok_or_else(|| Error::Data("RANKING missing".into()))?,
        systems,
    })
}

fn check_triangular(sys: &SimpleSystem) -> Result<(), String> {
    let mut seen = [false; N_VARS];
    for r in &sys.relations {
        if std::mem::replace(&mut seen[r.leader], true) {
            return Err(format!("system {}: two relations with leader {}", sys.index, VAR_NAMES[r.leader]));
        }
    }
    Ok(())
}

/// How far a relation is from holding at a point; 0 when it holds.
fn violation(r: &Relation, x: &[f64; N_VARS], tol: f64) -> f64 {
    let (v, s) = r.poly.eval_scaled(x);
    let zero = v.abs() <= tol * s;
    match r.kind {
        RelationKind::Equation if zero => 0.0,
        RelationKind::Equation => (v / s).abs(),
        RelationKind::Inequation if zero => 1.0,
        RelationKind::Inequation => 0.0,
    }
}

impl SimpleSystem {
    /// True when every relation holds at the point `(k, v)`.
    pub fn accepts(&self, point: &[f64; N_VARS], tol: f64) -> bool {
        self.relations.iter().all(|r| violation(r, point, tol) == 0.0)
    }

    /// Worst violation among the relations in `v` only.
    pub fn v_violation(&self, v: &[f64; 5], tol: f64) -> f64 {
        let mut x = [0.0; N_VARS];
        x[V0..].copy_from_slice(v);
        self.relations
            .iter()
            .filter(|r| r.poly.is_v_only())
            .map(|r| violation(r, &x, tol))
            .fold(0.0, f64::max)
    }

    /// Solutions for `k` given `v`, solving leader by leader from the lowest
    /// ranked unknown upward. Complex roots prune a branch; an unknown
    /// constrained only by an inequation (or not at all) runs over `free_grid`.
    pub fn solve_in<T: Real>(&self, ranking: &[usize; N_VARS], v: &[T; 5], opts: &InvertOptions) -> Vec<Partial<T>> {
        let mut x = [T::zero(); N_VARS];
        x[V0..].copy_from_slice(v);
        let mut partials = vec![Partial { x, roots: Vec::new(), free: Vec::new() }];
        for &var in ranking.iter().rev().filter(|&&i| i < V0) {
            let rel = self.relations.iter().find(|r| r.leader == var);
            let mut next = Vec::new();
            for p in partials {
                match rel {
                    Some(r) if r.kind == RelationKind::Equation => {
                        let c = r.poly.coeffs_in(var, &p.x);
                        for (val, root) in leader_roots(&c, opts.tol) {
                            let mut q = p.clone();
                            q.x[var] = val;
                            if let Some(root) = root {
                                q.roots.push(root);
                            }
                            next.push(q);
                        }
                    }
                    _ => {
                        for &g in &opts.free_grid {
                            let mut q = p.clone();
                            q.x[var] = T::from_f64(g);
                            if let Some(r) = rel {
                                let xf = q.x.map(|t| t.re());
                                if violation(r, &xf, opts.tol) > 0.0 {
                                    continue;
                                }
                            }
                            q.free.push((VAR_NAMES[var].to_string(), g));
                            next.push(q);
                        }
                    }
                }
            }
            partials = next;
        }
        partials
    }
}

/// A (partial) assignment of all ten variables during solving.
#[derive(Clone, Debug)]
pub struct Partial<T> {
    pub x: [T; N_VARS],
    pub roots: Vec<i8>,
    pub free: Vec<(String, f64)>,
}

/// Real roots of `c[0] + c[1] x (+ c[2] x²)` with root labels for quadratics.
fn leader_roots<T: Real>(c: &[T], tol: f64) -> Vec<(T, Option<i8>)> {
    let two = T::from_f64(2.0);
    match c.len() {
        2 => {
            if c[1].re() == 0.0 {
                return vec![];
            }
            vec![(-c[0] / c[1], None)]
        }
        3 => {
            let (a, b, c0) = (c[2], c[1], c[0]);
            if a.re() == 0.0 {
                return if b.re() == 0.0 { vec![] } else { vec![(-c0 / b, None)] };
            }
            let disc = b * b - T::from_f64(4.0) * a * c0;
            let band = tol * (b * b).re().abs() + tol * 4.0 * (a * c0).re().abs();
            if disc.re().abs() <= band {
                vec![(-b / (two * a), Some(0))]
            } else if disc.re() < 0.0 {
                vec![]
            } else {
                let sq = disc.sqrt();
                vec![(-(b + sq) / (two * a), Some(1)), (-(b - sq) / (two * a), Some(-1))]
            }
        }
        _ => vec![],
    }
}

pub fn invert_thomas(model: ModelId, m: &SymmetricMoments, tol: f64) -> Result<Vec<InverseSolution>, Error> {
    invert_thomas_with(model, m, &InvertOptions { tol, ..InvertOptions::default() })
}

/// Every branch whose conditions in `v` hold contributes its solutions.
pub fn invert_thomas_with(
    model: ModelId,
    m: &SymmetricMoments,
    opts: &InvertOptions,
) -> Result<Vec<InverseSolution>, Error> {
    let dec = decomposition(model)?;
    if m.n() != 3 {
        return Err(Error::InvalidParams(format!("three-state models need 3 states, got {}", m.n())));
    }
    let v = [m.l[0], m.l[1], m.l[2], m.s[0], m.s[1]];
    let target = m.to_dd();
    let vd = v.map(Dd::from_f64);
    let violations: Vec<f64> = dec.systems.iter().map(|s| s.v_violation(&v, opts.tol)).collect();
    let mut out = Vec::new();
    for (sys, &viol) in dec.systems.iter().zip(&violations) {
        if viol > 0.0 {
            continue;
        }
        for p in sys.solve_in(&dec.ranking, &vd, opts) {
            let rates = p.x[..V0].iter().map(|x| x.re()).collect();
            let branch = Branch { system: sys.index, roots: p.roots };
            out.push(InverseSolution::new(model, rates, branch, p.free, &target));
        }
    }
    if violations.iter().all(|&x| x > 0.0) {
        let (best, &best_violation) = violations
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("decompositions are nonempty");
        return Err(Error::NoBranchMatches { best_system: best + 1, best_violation, violations });
    }
    Ok(out)
}

/// `(L1, L2, L3, S1, S2)` at `k` from the symmetrized polynomial system of
/// `model` (the system the decomposition splits).
pub fn symmetrized_v(model: ModelId, k: &[f64; 5]) -> Result<[f64; 5], Error> {
    let [k1, k2, k3, k4, k5] = *k;
    let s1 = -k5;
    let l1 = -(k1 + k2 + k3 + k4 + k5);
    let (s2, l2, l3) = match model {
        ModelId::M2 => (
            -k5 * (l1 + k1 + k2 + k3),
            k1 * k4 + k1 * k5 + k2 * k3 + k2 * k5 + k3 * k4 + k3 * k5,
            -k2 * k3 * k5,
        ),
        ModelId::M3 => (
            -k5 * (l1 + k1 + k2 + k3),
            k1 * k4 + k1 * k5 + k2 * k3 + k2 * k4 + k2 * k5 + k3 * k4 + k3 * k5,
            -k2 * k3 * k5,
        ),
        ModelId::M4 => (
            -k5 * (k1 + k2 + k3 + l1),
            k1 * k3 + k1 * k4 + k1 * k5 + k2 * k3 + k2 * k5 + k3 * k4 + k3 * k5,
            -k1 * k3 * k5 - k2 * k3 * k5,
        ),
        ModelId::M8 => (
            -k5 * (k1 + k2 + l1),
            k1 * k2 + k1 * k3 + k1 * k4 + k1 * k5 + k2 * k3 + k2 * k5,
            -k1 * k2 * k5,
        ),
        ModelId::M9 => (
            -k5 * (k1 + k2 + l1),
            k1 * k2 + k1 * k4 + k1 * k5 + k2 * k3 + k2 * k5,
            -k1 * k2 * k5,
        ),
        ModelId::UnbranchedChain(_) => return Err(Error::Unsupported("catalog models only")),
    };
    Ok([l1, l2, l3, s1, s2])
}

/// Indices (1-based) of the simple systems accepting the point `(k, v)`.
pub fn accepting_systems(model: ModelId, k: &[f64; 5], v: &[f64; 5], tol: f64) -> Result<Vec<usize>, Error> {
    let mut x = [0.0; N_VARS];
    x[..V0].copy_from_slice(k);
    x[V0..].copy_from_slice(v);
    Ok(decomposition(model)?
        .systems
        .iter()
        .filter(|s| s.accepts(&x, tol))
        .map(|s| s.index)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::{invert_generic, rel_dev, DEFAULT_FREE_GRID};
    use crate::model::CATALOG;
    use proptest::prelude::*;

    #[test]
    fn data_files_match_checksums() {
        let sums = include_str!("../../data/thomas/SHA256SUMS");
        for model in CATALOG {
            let name = format!("{}.txt", model.to_string().to_lowercase());
            let line = sums.lines().find(|l| l.ends_with(&name)).unwrap();
            assert_eq!(line.split_whitespace().next().unwrap(), data_sha256(model).unwrap(), "{name}");
        }
        assert_eq!(data_sha256(ModelId::UnbranchedChain(3)), None);
    }

    #[test]
    fn data_files_load_with_expected_counts() {
        let counts = [(ModelId::M2, 11), (ModelId::M3, 10), (ModelId::M4, 21), (ModelId::M8, 12), (ModelId::M9, 15)];
        for (m, n) in counts {
            let d = decomposition(m).unwrap();
            assert_eq!(d.systems.len(), n, "{m}");
            assert_eq!(d.systems[0].index, 1);
        }
    }

    #[test]
    fn rankings_match_models() {
        let names = |m| decomposition(m).unwrap().ranking[..5].iter().map(|&i| VAR_NAMES[i]).collect::<Vec<_>>();
        assert_eq!(names(ModelId::M2), ["k1", "k3", "k2", "k4", "k5"]);
        assert_eq!(names(ModelId::M8), ["k1", "k3", "k4", "k2", "k5"]);
        assert_eq!(names(ModelId::M9), ["k3", "k1", "k4", "k2", "k5"]);
    }

    #[test]
    fn parser_rejects_wrong_leader_and_duplicates() {
        let head = "MODEL M9\nRANKING k3 k1 k4 k2 k5 L1 L2 L3 S1 S2\nSYSTEM 1\n";
        let wrong = format!("{head}EQ; k2; (1,[1,1,0,0,0,0,0,0,0,0])\nEND\n");
        assert!(matches!(parse(&wrong), Err(Error::Data(_))));
        let dup = format!("{head}EQ; k1; (1,[1,0,0,0,0,0,0,0,0,0])\nNEQ; k1; (1,[1,0,0,0,0,0,0,0,0,1])\nEND\n");
        assert!(matches!(parse(&dup), Err(Error::Data(_))));
        let cubic = format!("{head}EQ; k2; (1,[0,3,0,0,0,0,0,0,0,0])\nEND\n");
        assert!(matches!(parse(&cubic), Err(Error::Data(_))));
        let ok = format!("{head}EQ; k1; (2,[1,0,0,0,0,0,0,0,0,0]) (-1,[0,0,0,0,0,0,0,0,1,0])\nEND\n");
        assert_eq!(parse(&ok).unwrap().systems[0].relations[0].poly.to_string(), "2*k1 - S1");
    }

    #[test]
    fn generic_branch_matches_system_one() {
        let m = SymmetricMoments::from_slice(&[-15.0, 27.0, -10.0, -5.0, 60.0]).unwrap();
        let t = invert_thomas(ModelId::M9, &m, 1e-9).unwrap();
        let g = invert_generic(ModelId::M9, &m).unwrap();
        assert_eq!(t.len(), 2);
        for (a, b) in t.iter().zip(&g) {
            assert_eq!(a.branch, b.branch);
            assert!(rel_dev(&a.rates, &b.rates) < 1e-14);
        }
    }

    #[test]
    fn m2_s2_zero_stratum() {
        // k4 = -k5 makes S2 = -k5 (L1 + k1 + k2 + k3) = -k5 (-k4 - k5) = 0
        let rates = [1.0, 2.0, 1.5, -3.0, 3.0];
        let m = SymmetricMoments::from_rates(ModelId::M2, &rates);
        assert_eq!(m.s[1], 0.0);
        let sols = invert_thomas(ModelId::M2, &m, 1e-9).unwrap();
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0].branch.system, 2);
        // system 2 reads k4 - S1 = 0
        assert_eq!(sols[0].rates[3], m.s[0]);
        assert!(sols[0].rel_err(&rates) < 1e-12 && sols[0].nonpositive);
    }

    #[test]
    fn no_branch_reports_violations() {
        // S1 = 0 with S2 != 0 lies outside every stratum of M9
        let m = SymmetricMoments::from_slice(&[-15.0, 27.0, -10.0, 0.0, 60.0]).unwrap();
        match invert_thomas(ModelId::M9, &m, 1e-9) {
            Err(Error::NoBranchMatches { violations, .. }) => assert_eq!(violations.len(), 15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_variables_use_the_grid() {
        // M3 generic system: k3 constrained only by k3 != 0
        let m = SymmetricMoments::from_rates(ModelId::M3, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let sols = invert_thomas(ModelId::M3, &m, 1e-9).unwrap();
        let k3: Vec<f64> = sols.iter().map(|s| s.free_params[0].1).collect();
        assert_eq!(k3, vec![0.1, 1.0, 10.0]);
        assert!(sols.iter().all(|s| s.residual < 1e-12));
    }

    #[test]
    fn symmetrized_v_matches_generator_moments() {
        let k = [0.7, 1.3, 2.9, 0.4, 1.7];
        for m in CATALOG {
            let v = symmetrized_v(m, &k).unwrap();
            let g = SymmetricMoments::from_rates(m, &k).to_vec();
            assert!(rel_dev(&v, &g) < 1e-13, "{m}: {v:?} vs {g:?}");
        }
    }

    #[test]
    fn integer_grid_is_partitioned() {
        // every k in {-2..2}^5: exactly one system accepts (exact arithmetic in f64)
        for model in CATALOG {
            let n = decomposition(model).unwrap().systems.len();
            let mut hits = vec![0usize; n];
            for code in 0..5usize.pow(5) {
                let k: [f64; 5] = std::array::from_fn(|i| ((code / 5usize.pow(i as u32)) % 5) as f64 - 2.0);
                let v = symmetrized_v(model, &k).unwrap();
                let acc = accepting_systems(model, &k, &v, 1e-9).unwrap();
                assert_eq!(acc.len(), 1, "{model} k={k:?} accepted by {acc:?}");
                hits[acc[0] - 1] += 1;
            }
            assert!(hits.iter().all(|&h| h > 0), "{model}: {hits:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn sampled_points_have_exactly_one_system(
            model in prop::sample::select(CATALOG.to_vec()),
            k in prop::collection::vec(prop_oneof![Just(0), 1i32..160, -40i32..0], 5),
        ) {
            // multiples of 1/8: every relation evaluates exactly, so no point sits inside the band
            let k: [f64; 5] = std::array::from_fn(|i| k[i] as f64 / 8.0);
            let v = symmetrized_v(model, &k).unwrap();
            let acc = accepting_systems(model, &k, &v, 1e-9).unwrap();
            prop_assert_eq!(acc.len(), 1, "{} {:?} {:?}", model, k, acc);
        }

        #[test]
        fn solutions_of_accepting_system_include_the_point(
            model in prop::sample::select(CATALOG.to_vec()),
            k in prop::collection::vec(prop_oneof![Just(0.0), Just(0.1), Just(1.0), Just(10.0), 0.1f64..10.0], 5),
        ) {
            let k: [f64; 5] = k.try_into().unwrap();
            let v = symmetrized_v(model, &k).unwrap();
            let m = SymmetricMoments::from_slice(&v).unwrap();
            let sols = invert_thomas(model, &m, 1e-9).unwrap();
            let hit = sols.iter().any(|s| s.rates.iter().zip(&k).all(|(a, b)| (a - b).abs() <= 1e-8 * (1.0 + b.abs())));
            // a free coordinate off the grid cannot be reproduced
            let off_grid = sols.iter().any(|s| {
                s.free_params.iter().any(|(n, _)| !DEFAULT_FREE_GRID.contains(&k[var_index(n).unwrap()]))
            });
            prop_assert!(hit || off_grid, "{} {:?}", model, k);
        }
    }
}
