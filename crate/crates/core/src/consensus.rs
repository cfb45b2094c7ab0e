//! Synchronous average consensus, plain and state-decomposed, with full
//! trace recording.
//!
//! In the decomposed protocol every node splits its value into a visible
//! sub-state `alpha`, exchanged with neighbors, and a hidden sub-state
//! `beta` that couples only to the node's own `alpha`. The two start with
//! `alpha + beta = 2 x` so the network-wide sum, and hence the average, is
//! unchanged.

use rand::Rng;
use thiserror::Error;

use crate::baselines::{self, NoiseParams, ObfuscationKind, ObfuscationNoise};
use crate::graph::{GraphError, Topology, WeightParams, WeightSchedule};
use crate::streams::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no weights defined for round {0}")]
    MissingRound(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("decomposition spread must be positive, got {0}")]
    InvalidSpread(f64),
    #[error("step size must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid obfuscation config: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, ConsensusError>;

#[derive(Debug, Clone, PartialEq)]
pub struct StandardState {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl DecomposedState {
    /// Builds a state from explicit sub-states, requiring
    /// `alpha[i] + beta[i] == 2 * x0[i]` exactly.
    pub fn from_parts(x0: &[f64], alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        for v in [&alpha, &beta] {
            if v.len() != x0.len() {
                return Err(ConsensusError::DimensionMismatch {
                    expected: x0.len(),
                    got: v.len(),
                });
            }
        }
        let state = DecomposedState { alpha, beta };
        assert!(state.satisfies_split(x0), "alpha + beta must equal 2 x0");
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn satisfies_split(&self, x0: &[f64]) -> bool {
        self.alpha
            .iter()
            .zip(&self.beta)
            .zip(x0)
            .all(|((a, b), x)| a + b == 2.0 * x)
    }

    /// Per-node value `(alpha + beta) / 2`.
    pub fn node_values(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| (a + b) / 2.0)
            .collect()
    }
}

/// Private coupling weight between each node's two sub-states, per round.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBetaSchedule {
    pub eta: f64,
    /// `rounds[k][i]` couples node `i`'s sub-states at round `k`.
    pub rounds: Vec<Vec<f64>>,
}

impl AlphaBetaSchedule {
    pub fn generate<R: Rng + ?Sized>(
        node_count: usize,
        horizon: usize,
        params: &WeightParams,
        rng: &mut R,
    ) -> Result<Self> {
        params.check()?;
        Ok(AlphaBetaSchedule {
            eta: params.eta,
            rounds: params.draw(node_count, horizon, rng),
        })
    }

    pub fn constant(node_count: usize, horizon: usize, weight: f64, eta: f64) -> Self {
        AlphaBetaSchedule {
            eta,
            rounds: vec![vec![weight; node_count]; horizon + 1],
        }
    }

    pub fn get(&self, round: usize, node: usize) -> Option<f64> {
        self.rounds.get(round).and_then(|r| r.get(node)).copied()
    }

    /// Entries at rounds `>= 1` outside `[eta, 1)`, as (round, node, weight).
    pub fn violations(&self) -> Vec<(usize, usize, f64)> {
        self.rounds
            .iter()
            .enumerate()
            .skip(1)
            .flat_map(|(k, r)| r.iter().enumerate().map(move |(i, &w)| (k, i, w)))
            .filter(|&(_, _, w)| !(w >= self.eta && w < 1.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Standard,
    Decomposed,
    CorrelatedNoise,
    DecayingLaplace,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Standard,
        Protocol::Decomposed,
        Protocol::CorrelatedNoise,
        Protocol::DecayingLaplace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Standard => "standard",
            Protocol::Decomposed => "decomposed",
            Protocol::CorrelatedNoise => "correlated-noise",
            Protocol::DecayingLaplace => "decaying-laplace",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Protocol::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One round of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Node values: the internal state, or `(alpha + beta) / 2` when decomposed.
    pub x: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    /// What each node sends to its neighbors this round.
    pub transmitted: Vec<f64>,
}

/// Complete record of a run, private quantities included. Adversary views
/// are projections of this.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub protocol: Protocol,
    pub seed: u64,
    pub epsilon: f64,
    pub topology: Topology,
    pub initial: Vec<f64>,
    pub weights: WeightSchedule,
    pub alpha_beta: Option<AlphaBetaSchedule>,
    /// `rounds[k]` for `k = 0..=horizon`.
    pub rounds: Vec<Snapshot>,
}

impl Trace {
    pub fn horizon(&self) -> usize {
        self.rounds.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn last(&self) -> &Snapshot {
        self.rounds.last().expect("trace has a round-0 snapshot")
    }

    /// Values that converge to the average: alpha and beta for decomposed
    /// runs, x otherwise.
    pub fn state_values(&self, round: usize) -> Vec<f64> {
        let s = &self.rounds[round];
        match (&s.alpha, &s.beta) {
            (Some(a), Some(b)) => a.iter().chain(b).copied().collect(),
            _ => s.x.clone(),
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(ConsensusError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn round_weights<'a>(ws: &'a WeightSchedule, t: &Topology, k: usize) -> Result<&'a [f64]> {
    let w = ws.rounds.get(k).ok_or(ConsensusError::MissingRound(k))?;
    check_len(t.edge_count(), w.len())?;
    Ok(w)
}

/// `x_i + eps * sum_j a_ij (s_j - s_i)` using the sent values `s`, from a
/// single synchronous snapshot. `base` is what each node adds the coupling
/// to.
pub(crate) fn coupled_update(
    base: &[f64],
    sent: &[f64],
    reference: &[f64],
    t: &Topology,
    weights: &[f64],
    eps: f64,
) -> Vec<f64> {
    (0..t.node_count())
        .map(|i| {
            let flow: f64 = t
                .incident(i)
                .map(|(j, e)| weights[e] * (sent[j] - reference[i]))
                .sum();
            base[i] + eps * flow
        })
        .collect()
}

pub fn step_standard(
    s: &StandardState,
    t: &Topology,
    ws: &WeightSchedule,
    eps: f64,
    k: usize,
) -> Result<StandardState> {
    check_len(t.node_count(), s.values.len())?;
    let w = round_weights(ws, t, k)?;
    Ok(StandardState {
        values: coupled_update(&s.values, &s.values, &s.values, t, w, eps),
    })
}

pub const DEFAULT_SPREAD: f64 = 20.0;

/// Draws `alpha_i` uniformly in `[x_i - spread, x_i + spread]` and sets
/// `beta_i = 2 x_i - alpha_i`.
pub fn decompose<R: Rng + ?Sized>(x0: &[f64], rng: &mut R, spread: f64) -> Result<DecomposedState> {
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(ConsensusError::InvalidSpread(spread));
    }
    let mut alpha = Vec::with_capacity(x0.len());
    let mut beta = Vec::with_capacity(x0.len());
    for &x in x0 {
        // redraw until 2x - alpha is exact, so alpha + beta == 2x holds bitwise
        let (a, b) = loop {
            let a = rng.random_range(x - spread..=x + spread);
            let b = 2.0 * x - a;
            if a + b == 2.0 * x {
                break (a, b);
            }
        };
        alpha.push(a);
        beta.push(b);
    }
    Ok(DecomposedState { alpha, beta })
}

pub fn step_decomposed(
    d: &DecomposedState,
    t: &Topology,
    ws: &WeightSchedule,
    ab: &AlphaBetaSchedule,
    eps: f64,
    k: usize,
) -> Result<DecomposedState> {
    let n = t.node_count();
    check_len(n, d.alpha.len())?;
    check_len(n, d.beta.len())?;
    let w = round_weights(ws, t, k)?;
    let ab_k = ab.rounds.get(k).ok_or(ConsensusError::MissingRound(k))?;
    check_len(n, ab_k.len())?;

    let mut alpha = coupled_update(&d.alpha, &d.alpha, &d.alpha, t, w, eps);
    let mut beta = Vec::with_capacity(n);
    for i in 0..n {
        let gap = d.beta[i] - d.alpha[i];
        alpha[i] += eps * ab_k[i] * gap;
        beta.push(d.beta[i] - eps * ab_k[i] * gap);
    }
    Ok(DecomposedState { alpha, beta })
}

/// Arithmetic mean of the initial values.
pub fn consensus_target(x0: &[f64]) -> Result<f64> {
    if x0.is_empty() {
        return Err(ConsensusError::EmptyInput);
    }
    Ok(x0.iter().sum::<f64>() / x0.len() as f64)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ConsensusError::InvalidEpsilon(eps));
    }
    Ok(())
}

/// Runs plain consensus for `horizon` rounds from `x0`.
pub fn simulate_standard(
    t: &Topology,
    x0: &[f64],
    ws: &WeightSchedule,
    eps: f64,
    horizon: usize,
    seed: u64,
) -> Result<Trace> {
    check_eps(eps)?;
    check_len(t.node_count(), x0.len())?;
    let mut state = StandardState { values: x0.to_vec() };
    let mut rounds = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        if k > 0 {
            state = step_standard(&state, t, ws, eps, k - 1)?;
        }
        rounds.push(Snapshot {
            x: state.values.clone(),
            alpha: None,
            beta: None,
            transmitted: state.values.clone(),
        });
    }
    Ok(Trace {
        protocol: Protocol::Standard,
        seed,
        epsilon: eps,
        topology: t.clone(),
        initial: x0.to_vec(),
        weights: ws.clone(),
        alpha_beta: None,
        rounds,
    })
}

/// Runs the decomposed protocol from explicit initial sub-states.
#[allow(clippy::too_many_arguments)]
pub fn simulate_decomposed(
    t: &Topology,
    x0: &[f64],
    d0: &DecomposedState,
    ws: &WeightSchedule,
    ab: &AlphaBetaSchedule,
    eps: f64,
    horizon: usize,
    seed: u64,
) -> Result<Trace> {
    check_eps(eps)?;
    check_len(t.node_count(), x0.len())?;
    let mut state = d0.clone();
    let mut rounds = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        if k > 0 {
            state = step_decomposed(&state, t, ws, ab, eps, k - 1)?;
        }
        rounds.push(Snapshot {
            x: state.node_values(),
            alpha: Some(state.alpha.clone()),
            beta: Some(state.beta.clone()),
            transmitted: state.alpha.clone(),
        });
    }
    Ok(Trace {
        protocol: Protocol::Decomposed,
        seed,
        epsilon: eps,
        topology: t.clone(),
        initial: x0.to_vec(),
        weights: ws.clone(),
        alpha_beta: Some(ab.clone()),
        rounds,
    })
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: Topology,
    pub protocol: Protocol,
    pub epsilon: f64,
    pub initial: Vec<f64>,
    pub horizon: usize,
    pub seed: u64,
    pub edge_weights: WeightParams,
    pub alpha_beta_weights: WeightParams,
    pub spread: f64,
    pub noise: NoiseParams,
}

impl RunConfig {
    /// Standard-protocol defaults on the given graph and initial values.
    pub fn new(topology: Topology, initial: Vec<f64>) -> Self {
        RunConfig {
            topology,
            protocol: Protocol::Standard,
            epsilon: 1.0 / 3.0,
            initial,
            horizon: 500,
            seed: 0,
            edge_weights: WeightParams::default(),
            alpha_beta_weights: WeightParams::default(),
            spread: DEFAULT_SPREAD,
            noise: NoiseParams::default(),
        }
    }
}

/// Runs a configuration. Edge weights, coupling weights, sub-states and
/// noise each draw from their own stream of `cfg.seed`.
pub fn run(cfg: &RunConfig) -> Result<Trace> {
    let t = &cfg.topology;
    let ws = WeightSchedule::generate(
        t,
        cfg.horizon,
        &cfg.edge_weights,
        &mut stream_rng(cfg.seed, Stream::EdgeWeights),
    )?;
    match cfg.protocol {
        Protocol::Standard => simulate_standard(t, &cfg.initial, &ws, cfg.epsilon, cfg.horizon, cfg.seed),
        Protocol::Decomposed => {
            let ab = AlphaBetaSchedule::generate(
                t.node_count(),
                cfg.horizon,
                &cfg.alpha_beta_weights,
                &mut stream_rng(cfg.seed, Stream::AlphaBetaWeights),
            )?;
            check_len(t.node_count(), cfg.initial.len())?;
            let d0 = decompose(&cfg.initial, &mut stream_rng(cfg.seed, Stream::SubStates), cfg.spread)?;
            simulate_decomposed(t, &cfg.initial, &d0, &ws, &ab, cfg.epsilon, cfg.horizon, cfg.seed)
        }
        Protocol::CorrelatedNoise | Protocol::DecayingLaplace => {
            let kind = if cfg.protocol == Protocol::CorrelatedNoise {
                ObfuscationKind::CorrelatedNoise
            } else {
                ObfuscationKind::DecayingLaplace
            };
            let noise = ObfuscationNoise::new(
                cfg.noise.config(kind)?,
                t.node_count(),
                stream_rng(cfg.seed, Stream::Noise),
            );
            baselines::simulate_obfuscated(t, &cfg.initial, &ws, cfg.epsilon, cfg.horizon, cfg.seed, noise)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, five_node_topology, Round0Weights, SteadyWeights};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_weights(t: &Topology, w: &[f64]) -> Vec<Vec<f64>> {
        let n = t.node_count();
        let mut a = vec![vec![0.0; n]; n];
        for (e, edge) in t.edges().iter().enumerate() {
            a[edge.lo()][edge.hi()] = w[e];
            a[edge.hi()][edge.lo()] = w[e];
        }
        a
    }

    /// `x + eps (A - D) x` as an explicit matrix-vector product.
    fn dense_standard_step(t: &Topology, w: &[f64], eps: f64, x: &[f64]) -> Vec<f64> {
        let a = dense_weights(t, w);
        let n = x.len();
        let mut p = vec![vec![0.0; n]; n];
        for i in 0..n {
            let deg: f64 = a[i].iter().sum();
            for j in 0..n {
                p[i][j] = eps * a[i][j];
            }
            p[i][i] += 1.0 - eps * deg;
        }
        p.iter()
            .map(|row| row.iter().zip(x).map(|(m, v)| m * v).sum())
            .collect()
    }

    #[test]
    fn standard_step_matches_hand_value() {
        let t = five_node_topology();
        let ws = WeightSchedule::constant(&t, 1, 0.75, 0.1);
        let s = StandardState { values: vec![1.0, 2.0, 3.0, 4.0, 5.0] };
        let next = step_standard(&s, &t, &ws, 1.0 / 3.0, 0).unwrap();
        assert!((next.values[0] - 2.25).abs() < 1e-15);
        let oracle = dense_standard_step(&t, &ws.rounds[0], 1.0 / 3.0, &s.values);
        for (a, b) in next.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn standard_fixed_points() {
        let t = five_node_topology();
        let ws = WeightSchedule::constant(&t, 1, 0.75, 0.1);
        let s = StandardState { values: vec![4.5; 5] };
        assert_eq!(step_standard(&s, &t, &ws, 0.3, 0).unwrap(), s);

        let single = build_topology(1, &[]).unwrap();
        let ws1 = WeightSchedule::constant(&single, 10, 0.5, 0.1);
        let trace = simulate_standard(&single, &[7.0], &ws1, 0.5, 10, 0).unwrap();
        assert!(trace.rounds.iter().all(|r| r.x == vec![7.0]));
    }

    #[test]
    fn step_rejects_wrong_dimensions() {
        let t = five_node_topology();
        let ws = WeightSchedule::constant(&t, 1, 0.75, 0.1);
        let s = StandardState { values: vec![1.0; 4] };
        assert_eq!(
            step_standard(&s, &t, &ws, 0.3, 0),
            Err(ConsensusError::DimensionMismatch { expected: 5, got: 4 })
        );
        let s = StandardState { values: vec![1.0; 5] };
        assert_eq!(step_standard(&s, &t, &ws, 0.3, 2), Err(ConsensusError::MissingRound(2)));
    }

    #[test]
    fn decompose_split_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = decompose(&[1.0, 2.0, 3.0, 4.0, 5.0], &mut rng, 20.0).unwrap();
        let total: f64 = d.alpha.iter().chain(&d.beta).sum();
        assert!((total - 30.0).abs() < 1e-12);
        assert!(d.satisfies_split(&[1.0, 2.0, 3.0, 4.0, 5.0]));
        for (a, x) in d.alpha.iter().zip([1.0, 2.0, 3.0, 4.0, 5.0]) {
            assert!((a - x).abs() <= 20.0);
        }

        let d = DecomposedState::from_parts(&[1.0], vec![7.4], vec![2.0 - 7.4]).unwrap();
        assert!((d.beta[0] + 5.4).abs() < 1e-12);
        assert_eq!(d.node_values(), vec![1.0]);

        let d = decompose(&[1.5], &mut rng, 1e-300).unwrap();
        assert_eq!(d.alpha, vec![1.5]);
        assert_eq!(d.beta, vec![1.5]);

        assert_eq!(decompose(&[1.0], &mut rng, 0.0), Err(ConsensusError::InvalidSpread(0.0)));
    }

    #[test]
    fn decomposed_single_node_hand_value() {
        let t = build_topology(1, &[]).unwrap();
        let ws = WeightSchedule::constant(&t, 1, 0.75, 0.1);
        let ab = AlphaBetaSchedule::constant(1, 1, 0.5, 0.1);
        let d = DecomposedState { alpha: vec![2.0], beta: vec![0.0] };
        let next = step_decomposed(&d, &t, &ws, &ab, 0.5, 0).unwrap();
        assert_eq!(next.alpha, vec![1.5]);
        assert_eq!(next.beta, vec![0.5]);

        // independent 2x2 iteration
        let m = [[1.0 - 0.25, 0.25], [0.25, 1.0 - 0.25]];
        let v = [m[0][0] * 2.0 + m[0][1] * 0.0, m[1][0] * 2.0 + m[1][1] * 0.0];
        assert_eq!(next.alpha[0], v[0]);
        assert_eq!(next.beta[0], v[1]);
    }

    #[test]
    fn decomposed_fixed_point() {
        let t = five_node_topology();
        let ws = WeightSchedule::constant(&t, 1, -3.0, 0.1);
        let ab = AlphaBetaSchedule::constant(5, 1, 11.0, 0.1);
        let d = DecomposedState { alpha: vec![2.5; 5], beta: vec![2.5; 5] };
        assert_eq!(step_decomposed(&d, &t, &ws, &ab, 1.0 / 3.0, 0).unwrap(), d);
    }

    #[test]
    fn consensus_target_examples() {
        assert_eq!(consensus_target(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 3.0);
        assert_eq!(consensus_target(&[-2.5]).unwrap(), -2.5);
        assert_eq!(consensus_target(&[-7.0, 7.0]).unwrap(), 0.0);
        assert_eq!(consensus_target(&[]), Err(ConsensusError::EmptyInput));
    }

    fn five_node_decomposed(seed: u64, horizon: usize) -> RunConfig {
        let mut cfg = RunConfig::new(five_node_topology(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        cfg.protocol = Protocol::Decomposed;
        cfg.horizon = horizon;
        cfg.seed = seed;
        cfg.edge_weights = WeightParams {
            eta: 0.1,
            round0: Round0Weights::Uniform { low: -20.0, high: 20.0 },
            steady: SteadyWeights::Constant(0.75),
        };
        cfg
    }

    #[test]
    fn run_horizon_zero_and_determinism() {
        let trace = run(&five_node_decomposed(1, 0)).unwrap();
        assert_eq!(trace.rounds.len(), 1);
        assert_eq!(trace.horizon(), 0);

        let a = run(&five_node_decomposed(5, 100)).unwrap();
        let b = run(&five_node_decomposed(5, 100)).unwrap();
        assert_eq!(a, b);
        let c = run(&five_node_decomposed(6, 100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn five_node_decomposed_converges() {
        for seed in 0..5 {
            let trace = run(&five_node_decomposed(seed, 500)).unwrap();
            for v in trace.state_values(500) {
                assert!((v - 3.0).abs() < 1e-6, "seed {seed}: {v}");
            }
        }
    }

    proptest! {
        #[test]
        fn decomposed_step_conserves_sum(seed in any::<u64>(), eps in 0.01f64..0.5) {
            let t = five_node_topology();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = WeightParams::default();
            let ws = WeightSchedule::generate(&t, 3, &params, &mut rng).unwrap();
            let ab = AlphaBetaSchedule::generate(5, 3, &params, &mut rng).unwrap();
            let x0 = [1.0, 2.0, 3.0, 4.0, 5.0];
            let mut d = decompose(&x0, &mut rng, 20.0).unwrap();
            for k in 0..3 {
                let before: f64 = d.alpha.iter().chain(&d.beta).sum();
                d = step_decomposed(&d, &t, &ws, &ab, eps, k).unwrap();
                let after: f64 = d.alpha.iter().chain(&d.beta).sum();
                prop_assert!((after - before).abs() <= 1e-9 * before.abs().max(1.0));
            }
        }

        #[test]
        fn split_is_exact(x in proptest::collection::vec(-1e3f64..1e3, 1..10), seed in any::<u64>(), spread in 1e-3f64..100.0) {
            let d = decompose(&x, &mut ChaCha8Rng::seed_from_u64(seed), spread).unwrap();
            prop_assert!(d.satisfies_split(&x));
        }

        #[test]
        fn standard_conserves_sum(seed in any::<u64>()) {
            let t = five_node_topology();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ws = WeightSchedule::generate(&t, 30, &WeightParams::default(), &mut rng).unwrap();
            let x0: Vec<f64> = (0..5).map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect();
            let trace = simulate_standard(&t, &x0, &ws, 0.25, 30, seed).unwrap();
            let s0: f64 = x0.iter().sum();
            for r in &trace.rounds {
                let s: f64 = r.x.iter().sum();
                prop_assert!((s - s0).abs() <= 1e-9 * s0.abs().max(1.0));
            }
        }
    }
}
