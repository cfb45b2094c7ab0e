//! Convergence and privacy metrics over traces.

use std::collections::BTreeMap;

use crate::adversary::Estimate;
use crate::baselines::avg_err;
use crate::consensus::{consensus_target, Trace};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Per-round worst deviation from `target` over every state value (alpha and
/// beta for decomposed traces, x otherwise).
pub fn convergence_profile(trace: &Trace, target: f64) -> Vec<f64> {
    (0..trace.rounds.len())
        .map(|k| {
            trace
                .state_values(k)
                .iter()
                .map(|v| (v - target).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// First round from which the profile stays at or below `tol` through the
/// end.
pub fn rounds_to_tolerance(profile: &[f64], tol: f64) -> Option<usize> {
    let first_bad_from_end = profile.iter().rposition(|&d| d > tol);
    match first_bad_from_end {
        None => Some(0),
        Some(k) if k + 1 < profile.len() => Some(k + 1),
        Some(_) => None,
    }
}

/// Largest deviation over rounds of the summed state from its round-0
/// value: `sum(alpha + beta) - 2 sum(x0)` when decomposed, `sum(x) - sum(x0)`
/// otherwise.
pub fn conservation_drift(trace: &Trace) -> f64 {
    let expected: f64 = trace.state_values(0).iter().sum();
    (0..trace.rounds.len())
        .map(|k| (trace.state_values(k).iter().sum::<f64>() - expected).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub protocol: String,
    pub seed: u64,
    pub horizon: usize,
    pub target: f64,
    /// Worst state deviation from the target at the final round.
    pub final_consensus_error: f64,
    /// `|mean of final states - target|`.
    pub avg_err: f64,
    pub rounds_to_tolerance: Option<usize>,
    pub tolerance: f64,
    pub conservation_drift: f64,
    /// Observer estimates keyed by adversary label.
    pub estimates: BTreeMap<String, Estimate>,
}

pub fn summarize(trace: &Trace, estimates: &[(String, Estimate)], tol: f64) -> RunSummary {
    let target = consensus_target(&trace.initial).expect("traces have at least one node");
    let profile = convergence_profile(trace, target);
    RunSummary {
        protocol: trace.protocol.to_string(),
        seed: trace.seed,
        horizon: trace.horizon(),
        target,
        final_consensus_error: *profile.last().expect("nonempty trace"),
        avg_err: avg_err(trace, &trace.initial).expect("nonempty initial values"),
        rounds_to_tolerance: rounds_to_tolerance(&profile, tol),
        tolerance: tol,
        conservation_drift: conservation_drift(trace),
        estimates: estimates.iter().cloned().collect(),
    }
}
