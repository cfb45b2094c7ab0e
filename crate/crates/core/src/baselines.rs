//! Obfuscation-based comparison protocols.
//!
//! Both are reconstructions of the usual published forms, not reference
//! implementations:
//!
//! * **Correlated noise.** Node `i` sends `x_i + n_i[k]` with
//!   `n_i[k] = phi^k w_i[k] - phi^(k-1) w_i[k-1]`, `w_i[-1] = 0` and
//!   `w_i[k]` i.i.d. Gaussian. The update starts from the sent value, so the
//!   injected noise telescopes away and the exact average is recovered.
//! * **Decaying Laplace.** Node `i` sends `x_i + L_i[k]` with `L_i[k]`
//!   Laplace-distributed at scale `noise_scale * phi^k`. Each node keeps its
//!   own noiseless state and couples it to the noisy values it receives, so
//!   the state sum drifts and the final value carries an error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::consensus::{
    consensus_target, coupled_update, ConsensusError, Protocol, Result, Snapshot, StandardState,
    Trace,
};
use crate::graph::{Topology, WeightSchedule};

pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_NOISE_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObfuscationKind {
    CorrelatedNoise,
    DecayingLaplace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObfuscationConfig {
    pub kind: ObfuscationKind,
    /// `phi`, in `(0, 1)`.
    pub decay: f64,
    /// Gaussian deviation or Laplace scale at round 0.
    pub noise_scale: f64,
}

impl ObfuscationConfig {
    pub fn new(kind: ObfuscationKind, decay: f64, noise_scale: f64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(ConsensusError::InvalidNoise(format!("decay {decay} not in (0, 1)")));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(ConsensusError::InvalidNoise(format!(
                "noise scale {noise_scale} must be finite and nonnegative"
            )));
        }
        Ok(ObfuscationConfig { kind, decay, noise_scale })
    }
}

/// Noise knobs shared by both obfuscation protocols; the protocol picks the
/// kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub decay: f64,
    pub scale: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            decay: DEFAULT_DECAY,
            scale: DEFAULT_NOISE_SCALE,
        }
    }
}

impl NoiseParams {
    pub fn config(&self, kind: ObfuscationKind) -> Result<ObfuscationConfig> {
        ObfuscationConfig::new(kind, self.decay, self.scale)
    }
}

/// Zero-mean Laplace sample with the given scale, by inverting the CDF.
fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    // u in (-1/2, 1/2]
    let u: f64 = 0.5 - rng.random::<f64>();
    let mag = -(1.0 - 2.0 * u.abs()).ln();
    scale * mag.copysign(u)
}

/// Per-round perturbation generator. Yields one vector per round starting
/// at round 0.
#[derive(Debug, Clone)]
pub struct ObfuscationNoise {
    cfg: ObfuscationConfig,
    rng: ChaCha8Rng,
    prev_raw: Vec<f64>,
    round: usize,
}

impl ObfuscationNoise {
    pub fn new(cfg: ObfuscationConfig, node_count: usize, rng: ChaCha8Rng) -> Self {
        ObfuscationNoise {
            cfg,
            rng,
            prev_raw: vec![0.0; node_count],
            round: 0,
        }
    }

    pub fn config(&self) -> &ObfuscationConfig {
        &self.cfg
    }

    /// Raw Gaussian draws `w[k-1]` behind the most recent correlated-noise
    /// round.
    pub fn last_raw(&self) -> &[f64] {
        &self.prev_raw
    }

    pub fn next_round(&mut self) -> Vec<f64> {
        let k = self.round;
        self.round += 1;
        let n = self.prev_raw.len();
        if self.cfg.noise_scale == 0.0 {
            return vec![0.0; n];
        }
        let phi = self.cfg.decay;
        match self.cfg.kind {
            ObfuscationKind::CorrelatedNoise => {
                let normal = Normal::new(0.0, self.cfg.noise_scale).expect("scale checked");
                let now = phi.powi(k as i32);
                let before = if k == 0 { 0.0 } else { phi.powi(k as i32 - 1) };
                let raw: Vec<f64> = (0..n).map(|_| normal.sample(&mut self.rng)).collect();
                let out = raw
                    .iter()
                    .zip(&self.prev_raw)
                    .map(|(w, w_prev)| now * w - before * w_prev)
                    .collect();
                self.prev_raw = raw;
                out
            }
            ObfuscationKind::DecayingLaplace => {
                let scale = self.cfg.noise_scale * phi.powi(k as i32);
                (0..n).map(|_| sample_laplace(&mut self.rng, scale)).collect()
            }
        }
    }
}

fn perturb(values: &[f64], noise: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(noise)
        .map(|(&x, &n)| if n == 0.0 { x } else { x + n })
        .collect()
}

fn check_inputs(s: &StandardState, noise: &[f64], t: &Topology, ws: &WeightSchedule, k: usize) -> Result<()> {
    for got in [s.values.len(), noise.len()] {
        if got != t.node_count() {
            return Err(ConsensusError::DimensionMismatch {
                expected: t.node_count(),
                got,
            });
        }
    }
    match ws.rounds.get(k) {
        Some(w) if w.len() == t.edge_count() => Ok(()),
        Some(w) => Err(ConsensusError::DimensionMismatch {
            expected: t.edge_count(),
            got: w.len(),
        }),
        None => Err(ConsensusError::MissingRound(k)),
    }
}

/// One correlated-noise round. Returns the next state and the values sent
/// this round.
pub fn step_correlated_noise(
    s: &StandardState,
    noise: &[f64],
    t: &Topology,
    ws: &WeightSchedule,
    eps: f64,
    k: usize,
) -> Result<(StandardState, Vec<f64>)> {
    check_inputs(s, noise, t, ws, k)?;
    let sent = perturb(&s.values, noise);
    let values = coupled_update(&sent, &sent, &sent, t, &ws.rounds[k], eps);
    Ok((StandardState { values }, sent))
}

/// One decaying-Laplace round. Returns the next state and the values sent
/// this round.
pub fn step_decaying_laplace(
    s: &StandardState,
    noise: &[f64],
    t: &Topology,
    ws: &WeightSchedule,
    eps: f64,
    k: usize,
) -> Result<(StandardState, Vec<f64>)> {
    check_inputs(s, noise, t, ws, k)?;
    let sent = perturb(&s.values, noise);
    let values = coupled_update(&s.values, &sent, &s.values, t, &ws.rounds[k], eps);
    Ok((StandardState { values }, sent))
}

/// Runs an obfuscated protocol. Noise is drawn for every round including
/// the last, so the final snapshot also carries a sent vector.
pub fn simulate_obfuscated(
    t: &Topology,
    x0: &[f64],
    ws: &WeightSchedule,
    eps: f64,
    horizon: usize,
    seed: u64,
    mut noise: ObfuscationNoise,
) -> Result<Trace> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ConsensusError::InvalidEpsilon(eps));
    }
    if x0.len() != t.node_count() {
        return Err(ConsensusError::DimensionMismatch {
            expected: t.node_count(),
            got: x0.len(),
        });
    }
    let kind = noise.config().kind;
    let mut state = StandardState { values: x0.to_vec() };
    let mut rounds = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let n = noise.next_round();
        if k == horizon {
            rounds.push(Snapshot {
                x: state.values.clone(),
                alpha: None,
                beta: None,
                transmitted: perturb(&state.values, &n),
            });
            break;
        }
        let (next, sent) = match kind {
            ObfuscationKind::CorrelatedNoise => step_correlated_noise(&state, &n, t, ws, eps, k)?,
            ObfuscationKind::DecayingLaplace => step_decaying_laplace(&state, &n, t, ws, eps, k)?,
        };
        rounds.push(Snapshot {
            x: std::mem::replace(&mut state, next).values,
            alpha: None,
            beta: None,
            transmitted: sent,
        });
    }
    Ok(Trace {
        protocol: match kind {
            ObfuscationKind::CorrelatedNoise => Protocol::CorrelatedNoise,
            ObfuscationKind::DecayingLaplace => Protocol::DecayingLaplace,
        },
        seed,
        epsilon: eps,
        topology: t.clone(),
        initial: x0.to_vec(),
        weights: ws.clone(),
        alpha_beta: None,
        rounds,
    })
}

/// `|mean of final states - mean of x0|`.
pub fn avg_err(trace: &Trace, x0: &[f64]) -> Result<f64> {
    let target = consensus_target(x0)?;
    let last = trace.state_values(trace.horizon());
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    Ok((mean - target).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{run, simulate_standard, RunConfig};
    use crate::graph::{five_node_topology, Round0Weights, SteadyWeights, WeightParams};
    use crate::streams::{stream_rng, Stream};
    use rand::SeedableRng;

    fn cfg(kind: ObfuscationKind, scale: f64) -> ObfuscationConfig {
        ObfuscationConfig::new(kind, 0.9, scale).unwrap()
    }

    fn five_node_run(protocol: Protocol, scale: f64, seed: u64, horizon: usize) -> RunConfig {
        let mut c = RunConfig::new(five_node_topology(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        c.protocol = protocol;
        c.seed = seed;
        c.horizon = horizon;
        c.noise.scale = scale;
        c.edge_weights = WeightParams {
            eta: 0.1,
            round0: Round0Weights::Steady,
            steady: SteadyWeights::Constant(0.75),
        };
        c
    }

    #[test]
    fn config_validation() {
        assert!(ObfuscationConfig::new(ObfuscationKind::CorrelatedNoise, 1.0, 1.0).is_err());
        assert!(ObfuscationConfig::new(ObfuscationKind::CorrelatedNoise, 0.5, -1.0).is_err());
        assert!(ObfuscationConfig::new(ObfuscationKind::DecayingLaplace, 0.5, 0.0).is_ok());
    }

    #[test]
    fn zero_noise_matches_standard_exactly() {
        let t = five_node_topology();
        for protocol in [Protocol::CorrelatedNoise, Protocol::DecayingLaplace] {
            let c = five_node_run(protocol, 0.0, 4, 60);
            let noisy = run(&c).unwrap();
            let ws = WeightSchedule::generate(&t, 60, &c.edge_weights, &mut stream_rng(4, Stream::EdgeWeights)).unwrap();
            let plain = simulate_standard(&t, &c.initial, &ws, c.epsilon, 60, 4).unwrap();
            for (a, b) in noisy.rounds.iter().zip(&plain.rounds) {
                assert_eq!(a.x, b.x);
                assert_eq!(a.transmitted, b.transmitted);
            }
        }
    }

    #[test]
    fn correlated_noise_telescopes() {
        let mut gen = ObfuscationNoise::new(
            cfg(ObfuscationKind::CorrelatedNoise, 1.0),
            5,
            ChaCha8Rng::seed_from_u64(11),
        );
        let mut sums = [0.0; 5];
        for _ in 0..=100 {
            for (s, n) in sums.iter_mut().zip(gen.next_round()) {
                *s += n;
            }
        }
        let tail = 0.9f64.powi(100);
        for (s, w) in sums.iter().zip(gen.last_raw()) {
            assert!((s - tail * w).abs() < 1e-9, "{s} vs {}", tail * w);
            assert!(s.abs() < 1e-3);
        }
    }

    #[test]
    fn correlated_noise_recovers_average() {
        for seed in 0..10 {
            let trace = run(&five_node_run(Protocol::CorrelatedNoise, 1.0, seed, 500)).unwrap();
            assert!(avg_err(&trace, &trace.initial).unwrap() < 1e-6);
            for v in &trace.last().x {
                assert!((v - 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn laplace_samples_are_centered_with_expected_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_laplace(&mut rng, 2.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let mean_abs = draws.iter().map(|d| d.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03);
        // E|L| equals the scale
        assert!((mean_abs - 2.0).abs() < 0.03);
    }

    #[test]
    fn laplace_breaks_sum_conservation() {
        let mut drifting = 0;
        for seed in 0..20 {
            let trace = run(&five_node_run(Protocol::DecayingLaplace, 1.0, seed, 100)).unwrap();
            let drift = trace
                .rounds
                .iter()
                .map(|r| (r.x.iter().sum::<f64>() - 15.0).abs())
                .fold(0.0, f64::max);
            if drift > 1e-6 {
                drifting += 1;
            }
        }
        assert!(drifting >= 18);
    }

    #[test]
    fn last_round_carries_transmission() {
        let trace = run(&five_node_run(Protocol::DecayingLaplace, 1.0, 3, 10)).unwrap();
        assert_eq!(trace.rounds.len(), 11);
        assert_ne!(trace.last().transmitted, trace.last().x);
    }

    #[test]
    fn avg_err_of_exact_protocol_is_zero() {
        let trace = run(&five_node_run(Protocol::Standard, 0.0, 0, 500)).unwrap();
        assert!(avg_err(&trace, &trace.initial).unwrap() < 1e-6);
    }
}
