//! Alternate-world construction for the decomposed protocol.
//!
//! Given a run and a target node `j` with a non-colluding neighbor `m`, we
//! build a second run in which `x_j[0]` takes a different value, `m` absorbs
//! the difference so the network sum is unchanged, and three round-0
//! weights (`a_{j,ab}[0]`, `a_{m,ab}[0]`, `a_jm[0]`) are recomputed so every
//! sub-state agrees with the original run from round 1 on. If an adversary's
//! view of both runs is identical, nothing it observes pins down `x_j[0]`.

use rand::Rng;
use thiserror::Error;

use crate::adversary::{project_view, AdversaryError, AdversarySpec, EavesdropperSpec, HiddenWeight, ViewField};
use crate::consensus::{
    simulate_decomposed, AlphaBetaSchedule, ConsensusError, DecomposedState, Protocol, Trace,
};
use crate::graph::{Edge, WeightSchedule};

/// Smallest admissible magnitude for a compensating-weight denominator.
pub const DENOMINATOR_FLOOR: f64 = 1e-9;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndistError {
    #[error("alternate worlds need a decomposed trace, got {0}")]
    NotDecomposed(Protocol),
    #[error("node {0} is not in the topology")]
    UnknownNode(usize),
    #[error("node {m} is not a neighbor of node {j}")]
    NotNeighbor { j: usize, m: usize },
    #[error("altered initial value equals the original")]
    NoOpAlternate,
    #[error("degenerate denominator in {which}: {value:e}")]
    DegenerateDenominator { which: &'static str, value: f64 },
    #[error("traces differ in shape: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

/// The perturbed run: everything of the original, with `x_j[0]` replaced,
/// `x_m[0]` compensating, and three round-0 weights recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternateWorld {
    pub target: usize,
    pub accomplice: usize,
    pub altered_initial: f64,
    pub initial: Vec<f64>,
    pub substates: DecomposedState,
    pub weights: WeightSchedule,
    pub alpha_beta: AlphaBetaSchedule,
    epsilon: f64,
    seed: u64,
    horizon: usize,
    source: Trace,
}

impl AlternateWorld {
    pub fn accomplice_initial(&self) -> f64 {
        self.initial[self.accomplice]
    }

    pub fn coupling_weights(&self) -> (f64, f64) {
        (
            self.alpha_beta.rounds[0][self.target],
            self.alpha_beta.rounds[0][self.accomplice],
        )
    }

    pub fn edge_weight(&self) -> f64 {
        let t = &self.source.topology;
        self.weights
            .between(t, 0, self.target, self.accomplice)
            .expect("accomplice is a neighbor")
    }

    /// Runs the alternate world over the original horizon.
    pub fn simulate(&self) -> Result<Trace, IndistError> {
        Ok(simulate_decomposed(
            &self.source.topology,
            &self.initial,
            &self.substates,
            &self.weights,
            &self.alpha_beta,
            self.epsilon,
            self.horizon,
            self.seed,
        )?)
    }
}

fn nonzero(which: &'static str, value: f64) -> Result<f64, IndistError> {
    if value.abs() < DENOMINATOR_FLOOR {
        return Err(IndistError::DegenerateDenominator { which, value });
    }
    Ok(value)
}

pub fn construct_alternate(
    trace: &Trace,
    j: usize,
    m: usize,
    altered: f64,
) -> Result<AlternateWorld, IndistError> {
    if trace.protocol != Protocol::Decomposed {
        return Err(IndistError::NotDecomposed(trace.protocol));
    }
    let t = &trace.topology;
    for n in [j, m] {
        if n >= t.node_count() {
            return Err(IndistError::UnknownNode(n));
        }
    }
    let jm = t.edge_index(j, m).ok_or(IndistError::NotNeighbor { j, m })?;
    let xj = trace.initial[j];
    let xm = trace.initial[m];
    if altered == xj {
        return Err(IndistError::NoOpAlternate);
    }
    let eps = trace.epsilon;
    let r0 = &trace.rounds[0];
    let alpha = r0.alpha.as_ref().expect("decomposed snapshot");
    let beta = r0.beta.as_ref().expect("decomposed snapshot");
    let ab = trace.alpha_beta.as_ref().expect("decomposed trace");

    let altered_m = xj + xm - altered;
    let beta_j = 2.0 * altered - alpha[j];
    let beta_m = 2.0 * altered_m - alpha[m];

    let den_j = nonzero("target coupling", eps * (alpha[j] - beta_j))?;
    let den_m = nonzero("accomplice coupling", eps * (alpha[m] - beta_m))?;
    let den_jm = nonzero("target-accomplice edge", eps * (alpha[m] - alpha[j]))?;

    // Each new weight makes the round-0 update land on the original
    // round-1 sub-states.
    let a_j = ab.rounds[0][j];
    let a_m = ab.rounds[0][m];
    let a_jm = trace.weights.rounds[0][jm];
    let coupling_j = (beta[j] - beta_j + eps * a_j * (alpha[j] - beta[j])) / den_j;
    let coupling_m = (beta[m] - beta_m + eps * a_m * (alpha[m] - beta[m])) / den_m;
    let edge_jm = (beta[j] - beta_j + eps * a_jm * (alpha[m] - alpha[j])) / den_jm;

    let mut initial = trace.initial.clone();
    initial[j] = altered;
    initial[m] = altered_m;
    let mut new_beta = beta.clone();
    new_beta[j] = beta_j;
    new_beta[m] = beta_m;
    let mut weights = trace.weights.clone();
    weights.rounds[0][jm] = edge_jm;
    let mut alpha_beta = ab.clone();
    alpha_beta.rounds[0][j] = coupling_j;
    alpha_beta.rounds[0][m] = coupling_m;

    Ok(AlternateWorld {
        target: j,
        accomplice: m,
        altered_initial: altered,
        initial,
        substates: DecomposedState {
            alpha: alpha.clone(),
            beta: new_beta,
        },
        weights,
        alpha_beta,
        epsilon: eps,
        seed: trace.seed,
        horizon: trace.horizon(),
        source: trace.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub round: usize,
    pub field: String,
    pub original: f64,
    pub alternate: f64,
}

impl Divergence {
    pub fn magnitude(&self) -> f64 {
        (self.original - self.alternate).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub indistinguishable: bool,
    pub first_divergence: Option<Divergence>,
    pub fields_compared: usize,
}

impl Verdict {
    pub fn summary(&self) -> String {
        match &self.first_divergence {
            None => format!("indistinguishable ({} fields compared)", self.fields_compared),
            Some(d) => format!(
                "diverges at round {} in {}: {} vs {} (|diff| = {:e})",
                d.round,
                d.field,
                d.original,
                d.alternate,
                d.magnitude()
            ),
        }
    }
}

/// `|a - b| <= tol`, scaled by the larger magnitude once it exceeds 1.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn check_shape(original: &Trace, alternate: &Trace) -> Result<(), IndistError> {
    if original.topology != alternate.topology {
        return Err(IndistError::ShapeMismatch("topologies differ".into()));
    }
    if original.rounds.len() != alternate.rounds.len() {
        return Err(IndistError::ShapeMismatch(format!(
            "horizons {} and {}",
            original.horizon(),
            alternate.horizon()
        )));
    }
    Ok(())
}

/// Compares what `spec` sees in the two runs, field by field and round by
/// round, stopping at the first mismatch.
pub fn verify_indistinguishable(
    original: &Trace,
    alternate: &Trace,
    spec: &AdversarySpec,
    tol: f64,
) -> Result<Verdict, IndistError> {
    check_shape(original, alternate)?;
    let a = project_view(original, spec)?;
    let b = project_view(alternate, spec)?;
    let mut compared = 0;
    for (k, (ra, rb)) in a.rounds.iter().zip(&b.rounds).enumerate() {
        if ra.len() != rb.len() || ra.keys().ne(rb.keys()) {
            return Err(IndistError::ShapeMismatch(format!("view fields differ at round {k}")));
        }
        for ((field, &va), &vb) in ra.iter().zip(rb.values()) {
            compared += 1;
            if !close(va, vb, tol) {
                return Ok(Verdict {
                    indistinguishable: false,
                    first_divergence: Some(Divergence {
                        round: k,
                        field: field.to_string(),
                        original: va,
                        alternate: vb,
                    }),
                    fields_compared: compared,
                });
            }
        }
    }
    Ok(Verdict {
        indistinguishable: true,
        first_divergence: None,
        fields_compared: compared,
    })
}

/// Eavesdropper comparison. `eve` should withhold `a_jm[0]`; if it does
/// not, the recomputed edge weight shows up at round 0.
pub fn verify_eavesdropper_variant(
    original: &Trace,
    alternate: &Trace,
    eve: &EavesdropperSpec,
    tol: f64,
) -> Result<Verdict, IndistError> {
    verify_indistinguishable(original, alternate, &AdversarySpec::Eavesdropper(eve.clone()), tol)
}

/// First round `>= from` where any node's alpha or beta differs between the
/// two decomposed runs.
pub fn substate_divergence(
    original: &Trace,
    alternate: &Trace,
    from: usize,
    tol: f64,
) -> Result<Option<Divergence>, IndistError> {
    check_shape(original, alternate)?;
    for k in from..original.rounds.len() {
        let (o, a) = (&original.rounds[k], &alternate.rounds[k]);
        let pairs = [("alpha", &o.alpha, &a.alpha), ("beta", &o.beta, &a.beta)];
        for (name, ov, av) in pairs {
            let (ov, av) = match (ov, av) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(IndistError::ShapeMismatch("missing sub-states".into())),
            };
            for (i, (&x, &y)) in ov.iter().zip(av).enumerate() {
                if !close(x, y, tol) {
                    return Ok(Some(Divergence {
                        round: k,
                        field: format!("{name}[{i}]"),
                        original: x,
                        alternate: y,
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// Result of checking one (target, accomplice, altered value) draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub target: usize,
    pub accomplice: usize,
    pub altered_initial: f64,
    /// Every honest-but-curious node other than the accomplice sees the same
    /// view in both worlds. `None` when no such node exists.
    pub observers_blind: Option<bool>,
    /// First failing observer, if any.
    pub observer_failure: Option<(usize, Divergence)>,
    pub substates_equal_from_round_one: bool,
    pub consensus_preserved: bool,
    /// Full-wiretap eavesdropper without `a_jm[0]` sees identical views.
    pub eavesdropper_blind: bool,
    /// Full-wiretap eavesdropper granted `a_jm[0]` notices at round 0.
    pub eavesdropper_with_edge_weight_detects: bool,
    /// The accomplice itself sees its own view change.
    pub accomplice_detects: bool,
}

impl TrialReport {
    pub fn passed(&self) -> bool {
        self.observers_blind.unwrap_or(true)
            && self.substates_equal_from_round_one
            && self.consensus_preserved
            && self.eavesdropper_blind
            && self.eavesdropper_with_edge_weight_detects
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Checked(TrialReport),
    Degenerate(IndistError),
}

/// Builds the alternate world for `(j, m, altered)` and runs every check.
pub fn check_trial(trace: &Trace, j: usize, m: usize, altered: f64, tol: f64) -> Result<TrialOutcome, IndistError> {
    let world = match construct_alternate(trace, j, m, altered) {
        Ok(w) => w,
        Err(e @ IndistError::DegenerateDenominator { .. }) => return Ok(TrialOutcome::Degenerate(e)),
        Err(e) => return Err(e),
    };
    let alt = world.simulate()?;
    let t = &trace.topology;

    let mut observers_blind = None;
    let mut observer_failure = None;
    for i in (0..t.node_count()).filter(|&i| i != j && i != m) {
        let v = verify_indistinguishable(trace, &alt, &AdversarySpec::HonestButCurious { node: i }, tol)?;
        observers_blind = Some(observers_blind.unwrap_or(true) && v.indistinguishable);
        if observer_failure.is_none() {
            observer_failure = v.first_divergence.map(|d| (i, d));
        }
    }

    let substates_equal_from_round_one = substate_divergence(trace, &alt, 1, tol)?.is_none();
    let consensus_preserved = trace
        .state_values(trace.horizon())
        .iter()
        .zip(alt.state_values(alt.horizon()))
        .all(|(a, b)| (a - b).abs() <= 1e-6);

    let edge = Edge::new(j, m);
    let hidden = vec![HiddenWeight { edge, round: Some(0) }];
    let eavesdropper_blind =
        verify_eavesdropper_variant(trace, &alt, &EavesdropperSpec::full(t, hidden), tol)?.indistinguishable;
    let informed = verify_eavesdropper_variant(trace, &alt, &EavesdropperSpec::full(t, vec![]), tol)?;
    let eavesdropper_with_edge_weight_detects = informed
        .first_divergence
        .as_ref()
        .is_some_and(|d| d.round == 0 && d.field == ViewField::Weight(edge).to_string());

    let accomplice_detects =
        !verify_indistinguishable(trace, &alt, &AdversarySpec::HonestButCurious { node: m }, tol)?.indistinguishable;

    Ok(TrialOutcome::Checked(TrialReport {
        target: j,
        accomplice: m,
        altered_initial: altered,
        observers_blind,
        observer_failure,
        substates_equal_from_round_one,
        consensus_preserved,
        eavesdropper_blind,
        eavesdropper_with_edge_weight_detects,
        accomplice_detects,
    }))
}

/// Half-width of the window the altered initial value is drawn from.
pub const ALTERATION_RANGE: f64 = 50.0;

/// Draws a target with at least one neighbor, a neighbor as accomplice, and
/// an altered value within `ALTERATION_RANGE` of the original.
pub fn draw_trial<R: Rng + ?Sized>(trace: &Trace, rng: &mut R) -> Option<(usize, usize, f64)> {
    let t = &trace.topology;
    let candidates: Vec<usize> = (0..t.node_count()).filter(|&n| !t.neighbors(n).is_empty()).collect();
    if candidates.is_empty() {
        return None;
    }
    let j = candidates[rng.random_range(0..candidates.len())];
    let nbrs = t.neighbors(j);
    let m = nbrs[rng.random_range(0..nbrs.len())];
    let xj = trace.initial[j];
    let altered = loop {
        let v = xj + rng.random_range(-ALTERATION_RANGE..ALTERATION_RANGE);
        if v != xj {
            break v;
        }
    };
    Some((j, m, altered))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub degenerate: usize,
    /// Trials where the accomplice noticed, as it must.
    pub expected_fail: usize,
    /// Trials where the accomplice did not notice.
    pub unexpected_pass: usize,
    pub failures: Vec<TrialReport>,
}

impl SuiteReport {
    pub fn record(&mut self, outcome: TrialOutcome) {
        self.trials += 1;
        match outcome {
            TrialOutcome::Degenerate(_) => self.degenerate += 1,
            TrialOutcome::Checked(r) => {
                if r.accomplice_detects {
                    self.expected_fail += 1;
                } else {
                    self.unexpected_pass += 1;
                }
                if r.passed() {
                    self.passed += 1;
                } else {
                    self.failed += 1;
                    self.failures.push(r);
                }
            }
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0 && self.unexpected_pass == 0
    }
}

/// Runs `trials` random alternate-world checks against one decomposed run.
pub fn run_suite<R: Rng + ?Sized>(trace: &Trace, trials: usize, tol: f64, rng: &mut R) -> Result<SuiteReport, IndistError> {
    if trace.protocol != Protocol::Decomposed {
        return Err(IndistError::NotDecomposed(trace.protocol));
    }
    let mut report = SuiteReport::default();
    for _ in 0..trials {
        let Some((j, m, altered)) = draw_trial(trace, rng) else {
            break;
        };
        report.record(check_trial(trace, j, m, altered, tol)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{run, step_decomposed, RunConfig};
    use crate::graph::{five_node_topology, Round0Weights, SteadyWeights, WeightParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn five_node_trace(seed: u64, horizon: usize) -> Trace {
        let mut c = RunConfig::new(five_node_topology(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        c.protocol = Protocol::Decomposed;
        c.seed = seed;
        c.horizon = horizon;
        c.edge_weights = WeightParams {
            eta: 0.1,
            round0: Round0Weights::Uniform { low: -20.0, high: 20.0 },
            steady: SteadyWeights::Constant(0.75),
        };
        run(&c).unwrap()
    }

    #[test]
    fn alternate_initials_follow_the_construction() {
        let trace = five_node_trace(2, 10);
        let w = construct_alternate(&trace, 0, 1, 1.0 + 2.5).unwrap();
        assert_eq!(w.accomplice_initial(), 2.0 - 2.5);
        assert_eq!(w.initial.iter().sum::<f64>(), 15.0);
        assert_eq!(w.substates.alpha, *trace.rounds[0].alpha.as_ref().unwrap());
        assert!(w.substates.satisfies_split(&w.initial));
    }

    /// One decomposed step from both worlds must land on the same
    /// sub-states for j and m.
    #[test]
    fn round_zero_compensation_matches_original_step() {
        let trace = five_node_trace(4, 3);
        let w = construct_alternate(&trace, 0, 1, 42.0).unwrap();
        let alpha0 = trace.rounds[0].alpha.as_ref().unwrap();
        assert_eq!(w.substates.beta[0], 84.0 - alpha0[0]);

        let t = &trace.topology;
        let next = step_decomposed(&w.substates, t, &w.weights, &w.alpha_beta, trace.epsilon, 0).unwrap();
        let orig_a = trace.rounds[1].alpha.as_ref().unwrap();
        let orig_b = trace.rounds[1].beta.as_ref().unwrap();
        for i in [0, 1] {
            assert!(close(next.alpha[i], orig_a[i], 1e-9), "alpha {i}");
            assert!(close(next.beta[i], orig_b[i], 1e-9), "beta {i}");
        }
    }

    #[test]
    fn construction_preconditions() {
        let trace = five_node_trace(1, 3);
        assert_eq!(construct_alternate(&trace, 0, 2, 5.0), Err(IndistError::NotNeighbor { j: 0, m: 2 }));
        assert_eq!(construct_alternate(&trace, 0, 1, 1.0), Err(IndistError::NoOpAlternate));
        assert_eq!(construct_alternate(&trace, 0, 7, 5.0), Err(IndistError::UnknownNode(7)));

        // alpha_j == beta_bar_j  <=>  altered == alpha_j
        let alpha0 = trace.rounds[0].alpha.as_ref().unwrap()[0];
        assert!(matches!(
            construct_alternate(&trace, 0, 1, alpha0),
            Err(IndistError::DegenerateDenominator { which: "target coupling", .. })
        ));
    }

    #[test]
    fn rejects_non_decomposed_trace() {
        let mut c = RunConfig::new(five_node_topology(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        c.horizon = 3;
        let trace = run(&c).unwrap();
        assert_eq!(
            construct_alternate(&trace, 0, 1, 3.0),
            Err(IndistError::NotDecomposed(Protocol::Standard))
        );
    }

    #[test]
    fn identical_traces_agree_exactly() {
        let trace = five_node_trace(3, 20);
        for node in 0..5 {
            let v = verify_indistinguishable(&trace, &trace, &AdversarySpec::HonestButCurious { node }, 0.0).unwrap();
            assert!(v.indistinguishable);
        }
    }

    #[test]
    fn third_parties_cannot_tell_but_accomplice_can() {
        let trace = five_node_trace(6, 120);
        let w = construct_alternate(&trace, 0, 1, -13.0).unwrap();
        let alt = w.simulate().unwrap();
        for i in 2..5 {
            let v = verify_indistinguishable(&trace, &alt, &AdversarySpec::HonestButCurious { node: i }, 1e-9).unwrap();
            assert!(v.indistinguishable, "node {i}: {}", v.summary());
        }
        let v = verify_indistinguishable(&trace, &alt, &AdversarySpec::HonestButCurious { node: 1 }, 1e-9).unwrap();
        assert!(!v.indistinguishable);
        assert_eq!(v.first_divergence.unwrap().round, 0);
        assert!(substate_divergence(&trace, &alt, 1, 1e-8).unwrap().is_none());
        assert!(substate_divergence(&trace, &alt, 0, 1e-8).unwrap().is_some());
    }

    #[test]
    fn eavesdropper_variants() {
        let trace = five_node_trace(9, 50);
        let t = &trace.topology;
        let alt = construct_alternate(&trace, 4, 3, 30.0).unwrap().simulate().unwrap();
        let hidden = vec![HiddenWeight { edge: Edge::new(4, 3), round: Some(0) }];
        let blind = verify_eavesdropper_variant(&trace, &alt, &EavesdropperSpec::full(t, hidden), 1e-9).unwrap();
        assert!(blind.indistinguishable);
        let informed = verify_eavesdropper_variant(&trace, &alt, &EavesdropperSpec::full(t, vec![]), 1e-9).unwrap();
        let d = informed.first_divergence.unwrap();
        assert_eq!((d.round, d.field.as_str()), (0, "a[3-4]"));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = five_node_trace(1, 10);
        let b = five_node_trace(1, 11);
        assert!(matches!(
            verify_indistinguishable(&a, &b, &AdversarySpec::HonestButCurious { node: 0 }, 1e-9),
            Err(IndistError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn suite_on_five_node_topology() {
        let trace = five_node_trace(12, 80);
        let report = run_suite(&trace, 100, 1e-8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(report.trials, 100);
        assert_eq!(report.passed + report.degenerate, 100, "{:?}", report.failures.first());
        assert_eq!(report.expected_fail, report.passed);
        assert!(report.ok());

        let empty = run_suite(&trace, 0, 1e-8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(empty, SuiteReport::default());
    }

    #[test]
    fn tolerance_is_relative_above_one() {
        assert!(close(1e6, 1e6 + 1e-4, 1e-9));
        assert!(!close(1.0, 1.0 + 1e-8, 1e-9));
        assert!(close(0.0, 0.0, 0.0));
    }
}
