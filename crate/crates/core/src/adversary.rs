//! What an adversary can see, and what it can compute from it.
//!
//! Views are projections of a [`Trace`]: a per-round map from named
//! [`ViewField`]s to values. An honest-but-curious node `i` sees its own full
//! state (including its hidden sub-state and private coupling weight when
//! decomposed), the values its neighbors send, and the weights on its own
//! edges. An eavesdropper sees the values sent over the links it taps and
//! whichever edge weights it has been granted; it never sees a hidden
//! sub-state or a private coupling weight.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::consensus::Trace;
use crate::graph::{Edge, Topology};

/// Assumed value for edge weights the eavesdropper does not know.
pub const DEFAULT_ASSUMED_WEIGHT: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("node {0} is not in the topology")]
    UnknownNode(usize),
    #[error("edge {0} is not in the topology")]
    UnknownEdge(Edge),
    #[error("view lacks {field} at round {round}")]
    MissingObservation { round: usize, field: ViewField },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViewField {
    /// `x_i`.
    State(usize),
    /// `alpha_i`.
    Alpha(usize),
    /// `beta_i`, hidden sub-state.
    Beta(usize),
    /// `a_{i,alpha beta}`, private coupling weight.
    Coupling(usize),
    /// Value node `p` sent to its neighbors.
    Sent(usize),
    Weight(Edge),
}

impl fmt::Display for ViewField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewField::State(i) => write!(f, "x[{i}]"),
            ViewField::Alpha(i) => write!(f, "alpha[{i}]"),
            ViewField::Beta(i) => write!(f, "beta[{i}]"),
            ViewField::Coupling(i) => write!(f, "a_ab[{i}]"),
            ViewField::Sent(i) => write!(f, "sent[{i}]"),
            ViewField::Weight(e) => write!(f, "a[{e}]"),
        }
    }
}

/// A weight withheld from an eavesdropper; `round: None` hides every round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HiddenWeight {
    pub edge: Edge,
    pub round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightAccess {
    None,
    AllExcept(Vec<HiddenWeight>),
}

impl WeightAccess {
    pub fn knows(&self, edge: Edge, round: usize) -> bool {
        match self {
            WeightAccess::None => false,
            WeightAccess::AllExcept(hidden) => !hidden
                .iter()
                .any(|h| h.edge == edge && h.round.is_none_or(|r| r == round)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EavesdropperSpec {
    pub wiretap: Vec<Edge>,
    pub weights: WeightAccess,
}

impl EavesdropperSpec {
    /// Taps every link and knows every weight except `hidden`.
    pub fn full(t: &Topology, hidden: Vec<HiddenWeight>) -> Self {
        EavesdropperSpec {
            wiretap: t.edges().to_vec(),
            weights: WeightAccess::AllExcept(hidden),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversarySpec {
    HonestButCurious { node: usize },
    Eavesdropper(EavesdropperSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryView {
    pub spec: AdversarySpec,
    pub rounds: Vec<BTreeMap<ViewField, f64>>,
}

impl AdversaryView {
    pub fn get(&self, round: usize, field: ViewField) -> Result<f64, AdversaryError> {
        self.rounds
            .get(round)
            .and_then(|r| r.get(&field))
            .copied()
            .ok_or(AdversaryError::MissingObservation { round, field })
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.iter().all(BTreeMap::is_empty)
    }

    /// Flat `(round, field name, value)` rows in a stable order.
    pub fn records(&self) -> Vec<(usize, String, f64)> {
        self.rounds
            .iter()
            .enumerate()
            .flat_map(|(k, r)| r.iter().map(move |(f, v)| (k, f.to_string(), *v)))
            .collect()
    }

    /// Fields that expose another node's hidden sub-state or private
    /// coupling weight. Empty for every well-formed view.
    pub fn foreign_private_fields(&self) -> Vec<ViewField> {
        let owner = match self.spec {
            AdversarySpec::HonestButCurious { node } => Some(node),
            AdversarySpec::Eavesdropper(_) => None,
        };
        let mut out = BTreeSet::new();
        for r in &self.rounds {
            for f in r.keys() {
                if let ViewField::Beta(n) | ViewField::Coupling(n) = *f {
                    if Some(n) != owner {
                        out.insert(*f);
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Restricts a trace to what `spec` can observe.
pub fn project_view(trace: &Trace, spec: &AdversarySpec) -> Result<AdversaryView, AdversaryError> {
    let t = &trace.topology;
    let mut rounds = Vec::with_capacity(trace.rounds.len());
    match spec {
        AdversarySpec::HonestButCurious { node } => {
            let i = *node;
            if i >= t.node_count() {
                return Err(AdversaryError::UnknownNode(i));
            }
            for (k, snap) in trace.rounds.iter().enumerate() {
                let mut r = BTreeMap::new();
                r.insert(ViewField::State(i), snap.x[i]);
                match (&snap.alpha, &snap.beta, &trace.alpha_beta) {
                    (Some(a), Some(b), Some(ab)) => {
                        r.insert(ViewField::Alpha(i), a[i]);
                        r.insert(ViewField::Beta(i), b[i]);
                        r.insert(ViewField::Coupling(i), ab.rounds[k][i]);
                    }
                    _ => {
                        r.insert(ViewField::Sent(i), snap.transmitted[i]);
                    }
                }
                for (p, e) in t.incident(i) {
                    r.insert(ViewField::Sent(p), snap.transmitted[p]);
                    r.insert(ViewField::Weight(t.edges()[e]), trace.weights.rounds[k][e]);
                }
                rounds.push(r);
            }
        }
        AdversarySpec::Eavesdropper(eve) => {
            let mut tapped = BTreeSet::new();
            for &e in &eve.wiretap {
                if !t.has_edge(e.lo(), e.hi()) {
                    return Err(AdversaryError::UnknownEdge(e));
                }
                tapped.insert(e.lo());
                tapped.insert(e.hi());
            }
            for (k, snap) in trace.rounds.iter().enumerate() {
                let mut r = BTreeMap::new();
                for &p in &tapped {
                    r.insert(ViewField::Sent(p), snap.transmitted[p]);
                }
                for (e, &edge) in t.edges().iter().enumerate() {
                    if eve.weights.knows(edge, k) {
                        r.insert(ViewField::Weight(edge), trace.weights.rounds[k][e]);
                    }
                }
                rounds.push(r);
            }
        }
    }
    Ok(AdversaryView {
        spec: spec.clone(),
        rounds,
    })
}

/// Integral observer state. `z` accumulates the gap between what the target
/// sent and what a noiseless plain consensus update would have produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub target: usize,
    pub z: f64,
    /// Guesses for specific edges the view does not reveal.
    pub assumed_weights: BTreeMap<Edge, f64>,
    /// Guess for any other unrevealed weight.
    pub default_weight: f64,
}

impl ObserverState {
    /// Starts at `z[0]` = the target's round-0 transmission.
    pub fn init(target: usize, view: &AdversaryView, default_weight: f64) -> Result<Self, AdversaryError> {
        Ok(ObserverState {
            target,
            z: view.get(0, ViewField::Sent(target))?,
            assumed_weights: BTreeMap::new(),
            default_weight,
        })
    }

    fn weight(&self, view: &AdversaryView, edge: Edge, k: usize) -> f64 {
        view.get(k, ViewField::Weight(edge)).unwrap_or_else(|_| {
            self.assumed_weights
                .get(&edge)
                .copied()
                .unwrap_or(self.default_weight)
        })
    }
}

/// `z[k+1] = z[k] + s_t[k+1] - (s_t[k] + eps * sum_j a_tj (s_j[k] - s_t[k]))`,
/// using the round-`k` weight when the view has it and the assumption
/// otherwise.
pub fn observer_step(
    o: &ObserverState,
    view: &AdversaryView,
    t: &Topology,
    eps: f64,
    k: usize,
) -> Result<ObserverState, AdversaryError> {
    let target = o.target;
    if target >= t.node_count() {
        return Err(AdversaryError::UnknownNode(target));
    }
    let own = view.get(k, ViewField::Sent(target))?;
    let own_next = view.get(k + 1, ViewField::Sent(target))?;
    let mut flow = 0.0;
    for &j in t.neighbors(target) {
        let a = o.weight(view, Edge::new(target, j), k);
        flow += a * (view.get(k, ViewField::Sent(j))? - own);
    }
    let predicted = own + eps * flow;
    Ok(ObserverState {
        z: o.z + own_next - predicted,
        ..o.clone()
    })
}

/// Runs the observer over every round of the view; returns `z[0..=horizon]`.
pub fn run_observer(
    initial: ObserverState,
    view: &AdversaryView,
    t: &Topology,
    eps: f64,
) -> Result<Vec<f64>, AdversaryError> {
    let mut o = initial;
    let mut traj = vec![o.z];
    for k in 0..view.rounds.len().saturating_sub(1) {
        o = observer_step(&o, view, t, eps, k)?;
        traj.push(o.z);
    }
    Ok(traj)
}

/// Observer attack configured the way an eavesdropper would: projects the
/// view, seeds assumed weights, runs to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverAttack {
    pub target: usize,
    pub eavesdropper: EavesdropperSpec,
    pub assumed_weights: BTreeMap<Edge, f64>,
    pub default_weight: f64,
}

impl ObserverAttack {
    /// Full wiretap, every weight known except `hidden`, which are guessed
    /// as `assumed`.
    pub fn full_wiretap(t: &Topology, target: usize, hidden: Vec<HiddenWeight>, assumed: f64) -> Self {
        ObserverAttack {
            target,
            eavesdropper: EavesdropperSpec::full(t, hidden),
            assumed_weights: BTreeMap::new(),
            default_weight: assumed,
        }
    }

    pub fn trajectory(&self, trace: &Trace) -> Result<Vec<f64>, AdversaryError> {
        let view = project_view(trace, &AdversarySpec::Eavesdropper(self.eavesdropper.clone()))?;
        let mut o = ObserverState::init(self.target, &view, self.default_weight)?;
        o.assumed_weights = self.assumed_weights.clone();
        run_observer(o, &view, &trace.topology, trace.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub est_err: f64,
}

/// Final observer value and its distance to the true initial value.
pub fn estimate_initial(trajectory: &[f64], truth: f64) -> Estimate {
    let estimate = *trajectory.last().expect("observer trajectory is nonempty");
    Estimate {
        estimate,
        est_err: (estimate - truth).abs(),
    }
}
