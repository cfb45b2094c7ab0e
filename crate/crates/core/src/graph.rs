//! Undirected topologies, time-indexed symmetric weight schedules and the
//! step-size bound.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("node index {index} out of range for {node_count} nodes")]
    IndexOutOfRange { index: usize, node_count: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("topology must have at least one node")]
    Empty,
    #[error("step-size bound undefined for an undecomposed graph with no edges")]
    ZeroDegreeUndecomposed,
    #[error("missing weight for edge {edge:?} at round {round}")]
    MissingWeight { edge: Edge, round: usize },
    #[error("invalid weight parameters: {0}")]
    InvalidParams(String),
}

/// Unordered node pair, stored with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(usize, usize);

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn lo(self) -> usize {
        self.0
    }

    pub fn hi(self) -> usize {
        self.1
    }

    pub fn touches(self, node: usize) -> bool {
        self.0 == node || self.1 == node
    }

    /// The endpoint that is not `node`.
    pub fn other(self, node: usize) -> usize {
        if self.0 == node {
            self.1
        } else {
            self.0
        }
    }
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

/// Validated undirected graph. Edges are kept in ascending order; the
/// position of an edge in [`Topology::edges`] is its index in every weight
/// schedule built for this topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    edges: Vec<Edge>,
    index: BTreeMap<Edge, usize>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(node_count: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeMap::new();
        for &(a, b) in pairs {
            for n in [a, b] {
                if n >= node_count {
                    return Err(GraphError::IndexOutOfRange {
                        index: n,
                        node_count,
                    });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if seen.insert(Edge::new(a, b), ()).is_some() {
                return Err(GraphError::DuplicateEdge(a, b));
            }
        }
        let edges: Vec<Edge> = seen.into_keys().collect();
        let index = edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut neighbors = vec![Vec::new(); node_count];
        for e in &edges {
            neighbors[e.lo()].push(e.hi());
            neighbors[e.hi()].push(e.lo());
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Topology {
            node_count,
            edges,
            index,
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.index.get(&Edge::new(a, b)).copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_index(a, b).is_some()
    }

    /// Edges incident to `node`, as (neighbor, edge index), ordered by neighbor.
    pub fn incident(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors[node]
            .iter()
            .map(move |&p| (p, self.index[&Edge::new(node, p)]))
    }
}

pub fn build_topology(node_count: usize, edges: &[(usize, usize)]) -> Result<Topology, GraphError> {
    Topology::new(node_count, edges)
}

/// Largest neighbor-set size over all nodes.
pub fn max_degree(t: &Topology) -> usize {
    t.neighbors.iter().map(Vec::len).max().unwrap_or(0)
}

/// Breadth-first reachability from node 0.
pub fn is_connected(t: &Topology) -> bool {
    let mut seen = vec![false; t.node_count];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(n) = queue.pop_front() {
        for &p in t.neighbors(n) {
            if !seen[p] {
                seen[p] = true;
                reached += 1;
                queue.push_back(p);
            }
        }
    }
    reached == t.node_count
}

/// Half-open step-size interval `(0, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBound {
    pub upper: f64,
}

impl EpsilonBound {
    pub fn admits(&self, eps: f64) -> bool {
        eps > 0.0 && eps <= self.upper
    }
}

/// `(0, 1/Δ]` for plain consensus; decomposition adds one hidden neighbor
/// per node so the bound becomes `(0, 1/(Δ+1)]`.
pub fn epsilon_bound(delta: usize, decomposed: bool) -> Result<EpsilonBound, GraphError> {
    let effective = if decomposed { delta + 1 } else { delta };
    if effective == 0 {
        return Err(GraphError::ZeroDegreeUndecomposed);
    }
    Ok(EpsilonBound {
        upper: 1.0 / effective as f64,
    })
}

/// Samples a connected graph by drawing each pair with probability `p`,
/// redrawing until the result is connected.
pub fn random_connected<R: Rng + ?Sized>(node_count: usize, p: f64, rng: &mut R) -> Topology {
    assert!(node_count > 0, "need at least one node");
    loop {
        let mut pairs = Vec::new();
        for a in 0..node_count {
            for b in a + 1..node_count {
                if rng.random::<f64>() < p {
                    pairs.push((a, b));
                }
            }
        }
        let t = Topology::new(node_count, &pairs).expect("generated pairs are valid");
        if is_connected(&t) {
            return t;
        }
    }
}

/// How weights for rounds `k >= 1` are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyWeights {
    Constant(f64),
    /// Uniform on `[low, high)`.
    Uniform { low: f64, high: f64 },
}

/// How round-0 weights are drawn. Round 0 is unrestricted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Round0Weights {
    /// Same rule as the steady rounds.
    Steady,
    Constant(f64),
    /// Uniform on `[low, high)`.
    Uniform { low: f64, high: f64 },
}

pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_ROUND0_RANGE: (f64, f64) = (-20.0, 20.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    pub eta: f64,
    pub round0: Round0Weights,
    pub steady: SteadyWeights,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            eta: DEFAULT_ETA,
            round0: Round0Weights::Uniform {
                low: DEFAULT_ROUND0_RANGE.0,
                high: DEFAULT_ROUND0_RANGE.1,
            },
            steady: SteadyWeights::Uniform {
                low: DEFAULT_ETA,
                high: 1.0 - DEFAULT_ETA,
            },
        }
    }
}

impl WeightParams {
    pub fn check(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::InvalidParams(m));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta {} not in (0, 1)", self.eta));
        }
        match self.steady {
            SteadyWeights::Constant(v) if !(self.eta..1.0).contains(&v) => {
                return bad(format!("steady weight {v} not in [eta, 1)"));
            }
            SteadyWeights::Uniform { low, high } if !(low >= self.eta && high <= 1.0 && low < high) => {
                return bad(format!("steady range [{low}, {high}) not inside [eta, 1)"));
            }
            _ => {}
        }
        match self.round0 {
            Round0Weights::Uniform { low, high } if !(low < high && low.is_finite() && high.is_finite()) => {
                bad(format!("round-0 range [{low}, {high}) is empty"))
            }
            Round0Weights::Constant(v) if !v.is_finite() => bad("round-0 weight not finite".into()),
            _ => Ok(()),
        }
    }

    /// Draws `horizon + 1` rounds of `slots` weights each. Round-major: all
    /// slots of round 0 first, then round 1, and so on.
    pub fn draw<R: Rng + ?Sized>(&self, slots: usize, horizon: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let steady = |rng: &mut R| match self.steady {
            SteadyWeights::Constant(v) => v,
            SteadyWeights::Uniform { low, high } => rng.random_range(low..high),
        };
        let mut rounds = Vec::with_capacity(horizon + 1);
        let first = (0..slots)
            .map(|_| match self.round0 {
                Round0Weights::Steady => steady(rng),
                Round0Weights::Constant(v) => v,
                Round0Weights::Uniform { low, high } => rng.random_range(low..high),
            })
            .collect();
        rounds.push(first);
        for _ in 1..=horizon {
            rounds.push((0..slots).map(|_| steady(rng)).collect());
        }
        rounds
    }
}

/// Symmetric per-edge weights for rounds `0..=horizon`, stored once per
/// unordered edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    pub eta: f64,
    /// `rounds[k][e]` is the weight of edge `e` at round `k`.
    pub rounds: Vec<Vec<f64>>,
}

impl WeightSchedule {
    pub fn generate<R: Rng + ?Sized>(
        t: &Topology,
        horizon: usize,
        params: &WeightParams,
        rng: &mut R,
    ) -> Result<Self, GraphError> {
        params.check()?;
        Ok(WeightSchedule {
            eta: params.eta,
            rounds: params.draw(t.edge_count(), horizon, rng),
        })
    }

    /// Every round uses the same weight on every edge.
    pub fn constant(t: &Topology, horizon: usize, weight: f64, eta: f64) -> Self {
        WeightSchedule {
            eta,
            rounds: vec![vec![weight; t.edge_count()]; horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len().saturating_sub(1)
    }

    pub fn get(&self, round: usize, edge: usize) -> Option<f64> {
        self.rounds.get(round).and_then(|r| r.get(edge)).copied()
    }

    pub fn between(&self, t: &Topology, round: usize, a: usize, b: usize) -> Option<f64> {
        t.edge_index(a, b).and_then(|e| self.get(round, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightViolation {
    pub edge: Edge,
    pub round: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<WeightViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `eta <= w < 1` for every edge at rounds `1..=horizon`. Round-0
/// weights are never flagged.
pub fn validate_weight_schedule(
    ws: &WeightSchedule,
    t: &Topology,
    horizon: usize,
) -> Result<ValidationReport, GraphError> {
    let mut report = ValidationReport::default();
    for round in 0..=horizon {
        for (e, &edge) in t.edges().iter().enumerate() {
            let w = ws
                .get(round, e)
                .ok_or(GraphError::MissingWeight { edge, round })?;
            if round >= 1 && !(w >= ws.eta && w < 1.0) {
                report.violations.push(WeightViolation {
                    edge,
                    round,
                    weight: w,
                });
            }
        }
    }
    Ok(report)
}

/// Five-node topology of the numerical comparison (0-based labels).
pub fn five_node_topology() -> Topology {
    Topology::new(5, &[(0, 1), (0, 4), (1, 2), (2, 4), (3, 4)]).expect("static topology")
}
