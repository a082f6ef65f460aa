//! Model catalog: the five three-state models and unbranched chains, their
//! arc lists, generators and structural checks.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::Error;

/// Rates `k1..k_{2N-1}`. For chains the layout is
/// `(k1+, .., k_{N-1}+, k1-, .., k_{N-1}-, k_N)`.
pub type RateVector = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelId {
    M2,
    M3,
    M4,
    M8,
    M9,
    UnbranchedChain(usize),
}

/// A transition `from -> to` (1-based states, `to = N+1` is the observed
/// state) carrying rate `k[rate]` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: usize,
}

const fn tr(from: usize, to: usize, k: usize) -> Transition {
    Transition {
        from,
        to,
        rate: k - 1,
    }
}

const M2_ARCS: [Transition; 5] = [tr(1, 2, 1), tr(2, 1, 3), tr(1, 3, 2), tr(3, 1, 4), tr(3, 4, 5)];
const M3_ARCS: [Transition; 5] = [tr(1, 2, 1), tr(2, 1, 3), tr(1, 3, 2), tr(3, 2, 4), tr(3, 4, 5)];
const M4_ARCS: [Transition; 5] = [tr(1, 2, 1), tr(2, 3, 3), tr(1, 3, 2), tr(3, 1, 4), tr(3, 4, 5)];
const M8_ARCS: [Transition; 5] = [tr(1, 2, 1), tr(2, 3, 2), tr(3, 1, 3), tr(3, 2, 4), tr(3, 4, 5)];
const M9_ARCS: [Transition; 5] = [tr(1, 3, 1), tr(2, 3, 2), tr(3, 1, 3), tr(3, 2, 4), tr(3, 4, 5)];

/// The three-state models with a closed-form inverse or family.
pub const CATALOG: [ModelId; 5] = [ModelId::M2, ModelId::M3, ModelId::M4, ModelId::M8, ModelId::M9];

/// Models compared in variant enumeration by default (M3 is not solvable).
pub const SOLVABLE: [ModelId; 4] = [ModelId::M2, ModelId::M4, ModelId::M8, ModelId::M9];

/// Chain state `i` (1-based) is M2 state `M2_CHAIN_ORDER[i-1]`.
pub const M2_CHAIN_ORDER: [usize; 3] = [2, 1, 3];

/// Maps M2 rates to `UnbranchedChain(3)` rates under [`M2_CHAIN_ORDER`].
pub fn m2_to_chain(k: &[f64]) -> RateVector {
    // (k1+, k2+, k1-, k2-, k3) = (k3, k2, k1, k4, k5)
    vec![k[2], k[1], k[0], k[3], k[4]]
}

impl ModelId {
    /// Number of transient states N.
    pub fn n_states(self) -> usize {
        match self {
            ModelId::UnbranchedChain(n) => n,
            _ => 3,
        }
    }

    pub fn n_rates(self) -> usize {
        2 * self.n_states() - 1
    }

    /// Index of the exit rate `k_{2N-1}` in the rate vector.
    pub fn exit_index(self) -> usize {
        self.n_rates() - 1
    }

    pub fn is_catalog(self) -> bool {
        !matches!(self, ModelId::UnbranchedChain(_))
    }

    pub fn transitions(self) -> Vec<Transition> {
        match self {
            ModelId::M2 => M2_ARCS.to_vec(),
            ModelId::M3 => M3_ARCS.to_vec(),
            ModelId::M4 => M4_ARCS.to_vec(),
            ModelId::M8 => M8_ARCS.to_vec(),
            ModelId::M9 => M9_ARCS.to_vec(),
            ModelId::UnbranchedChain(n) => {
                let mut arcs = Vec::with_capacity(2 * n - 1);
                for i in 1..n {
                    arcs.push(Transition { from: i, to: i + 1, rate: i - 1 });
                    arcs.push(Transition { from: i + 1, to: i, rate: n - 1 + i - 1 });
                }
                arcs.push(Transition { from: n, to: n + 1, rate: 2 * n - 2 });
                arcs
            }
        }
    }

    /// Display names of the rates, e.g. `k1` or `k2+`.
    pub fn rate_names(self) -> Vec<String> {
        match self {
            ModelId::UnbranchedChain(n) => {
                let mut names: Vec<String> = (1..n).map(|i| format!("k{i}+")).collect();
                names.extend((1..n).map(|i| format!("k{i}-")));
                names.push(format!("k{n}"));
                names
            }
            _ => (1..=5).map(|i| format!("k{i}")).collect(),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::M2 => f.write_str("M2"),
            ModelId::M3 => f.write_str("M3"),
            ModelId::M4 => f.write_str("M4"),
            ModelId::M8 => f.write_str("M8"),
            ModelId::M9 => f.write_str("M9"),
            ModelId::UnbranchedChain(n) => write!(f, "chain:{n}"),
        }
    }
}

impl FromStr for ModelId {
    type Err = Error;

    /// Accepts `M2`..`M9`, `chain:N`, `chainN` and `UnbranchedChain(N)`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "M2" => return Ok(ModelId::M2),
            "M3" => return Ok(ModelId::M3),
            "M4" => return Ok(ModelId::M4),
            "M8" => return Ok(ModelId::M8),
            "M9" => return Ok(ModelId::M9),
            _ => {}
        }
        let digits = t
            .strip_prefix("chain:")
            .or_else(|| t.strip_prefix("chain"))
            .or_else(|| t.strip_prefix("UnbranchedChain(").and_then(|r| r.strip_suffix(')')));
        match digits.and_then(|d| d.parse::<usize>().ok()) {
            Some(n) if n >= 1 => Ok(ModelId::UnbranchedChain(n)),
            _ => Err(Error::UnknownModel(s.to_string())),
        }
    }
}

impl TryFrom<String> for ModelId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<ModelId> for String {
    fn from(m: ModelId) -> String {
        m.to_string()
    }
}

/// `{"model": "M9", "rates": [1, 2, 3, 4, 5]}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelId,
    pub rates: RateVector,
}

/// Assembles Q̃ (row-major, N×N) for arbitrary scalar rates. No sign checks.
pub fn qtilde_in<T: Scalar>(model: ModelId, rates: &[T]) -> Vec<Vec<T>> {
    let n = model.n_states();
    let mut qt = vec![vec![T::zero(); n]; n];
    for arc in model.transitions() {
        let k = rates[arc.rate];
        let a = arc.from - 1;
        if arc.to <= n {
            let b = arc.to - 1;
            qt[b][a] = qt[b][a] + k;
        }
        qt[a][a] = qt[a][a] - k;
    }
    qt
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    model: ModelId,
    rates: RateVector,
    q: DMatrix<f64>,
    nonpositive: bool,
}

impl Generator {
    /// Fails only on wrong arity or non-finite rates; nonpositive rates are
    /// accepted and flagged.
    pub fn new(model: ModelId, rates: &[f64]) -> Result<Self, Error> {
        if model.n_states() == 0 {
            return Err(Error::UnknownModel(model.to_string()));
        }
        if rates.len() != model.n_rates() {
            return Err(Error::WrongArity {
                model,
                expected: model.n_rates(),
                got: rates.len(),
            });
        }
        if let Some(i) = rates.iter().position(|k| !k.is_finite()) {
            return Err(Error::NonFiniteRate { index: i });
        }
        let n = model.n_states();
        let mut q = DMatrix::zeros(n + 1, n + 1);
        for arc in model.transitions() {
            let k = rates[arc.rate];
            q[(arc.from - 1, arc.to - 1)] += k;
            q[(arc.from - 1, arc.from - 1)] -= k;
        }
        Ok(Generator {
            model,
            rates: rates.to_vec(),
            q,
            nonpositive: rates.iter().any(|&k| k <= 0.0),
        })
    }

    pub fn model(&self) -> ModelId {
        self.model
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn n(&self) -> usize {
        self.model.n_states()
    }

    /// Full (N+1)×(N+1) generator with absorbing last state.
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// True if any rate is ≤ 0.
    pub fn nonpositive(&self) -> bool {
        self.nonpositive
    }

    pub fn exit_rate(&self) -> f64 {
        self.rates[self.model.exit_index()]
    }

    /// The state re-entered after each observation (always N in the catalog).
    pub fn return_state(&self) -> usize {
        self.n()
    }

    pub fn qtilde(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.q[(j, i)])
    }

    pub fn qtilde_in<T: Scalar>(&self) -> Vec<Vec<T>> {
        let k: Vec<T> = self.rates.iter().map(|&x| T::from_f64(x)).collect();
        qtilde_in(self.model, &k)
    }

    /// Q̃ with the exit rate removed from entry (N,N).
    pub fn reduced_no_exit(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = self.qtilde();
        m[(n - 1, n - 1)] += self.exit_rate();
        m
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub c1_ok: bool,
    pub c2_ok: bool,
    pub strongly_connected: bool,
    #[serde(rename = "s_equals_N")]
    pub s_equals_n: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.c1_ok && self.c2_ok && self.strongly_connected && self.s_equals_n
    }
}

pub fn validate(gen: &Generator) -> ValidationReport {
    validate_q(gen.q(), gen.return_state())
}

/// Checks a raw absorbing generator whose last state is observed and which
/// re-enters `return_state` (1-based) after each observation.
pub fn validate_q(q: &DMatrix<f64>, return_state: usize) -> ValidationReport {
    let size = q.nrows();
    let n = size - 1;
    let mut messages = Vec::new();

    let c1_ok = (0..n - 1).all(|i| q[(i, n)] == 0.0);
    if !c1_ok {
        messages.push(format!("C1: state {} is entered from a state other than {}", n + 1, n));
    }
    let absorbing = (0..size).all(|j| q[(n, j)] == 0.0);
    let c2_ok = absorbing && (1..=n).contains(&return_state);
    if !c2_ok {
        messages.push(format!("C2: state {} must return to a single state in 1..{}", n + 1, n));
    }
    let s_equals_n = return_state == n;
    if !s_equals_n {
        messages.push(format!("return state {return_state} differs from N = {n}"));
    }

    let mut adj = vec![Vec::new(); size];
    for i in 0..size {
        for j in 0..size {
            if i != j && q[(i, j)] > 0.0 {
                adj[i].push(j);
            }
        }
    }
    if (1..=n).contains(&return_state) {
        adj[n].push(return_state - 1);
    }
    let strongly_connected = reaches_all(&adj) && reaches_all(&transpose(&adj));
    if !strongly_connected {
        messages.push("transition graph is not strongly connected".to_string());
    }

    ValidationReport {
        c1_ok,
        c2_ok,
        strongly_connected,
        s_equals_n,
        messages,
    }
}

fn transpose(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut t = vec![Vec::new(); adj.len()];
    for (i, out) in adj.iter().enumerate() {
        for &j in out {
            t[j].push(i);
        }
    }
    t
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
