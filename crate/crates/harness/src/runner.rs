//! Executes scenarios and writes their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use statedecomp::adversary::{estimate_initial, AdversaryError, Estimate};
use statedecomp::consensus::{ConsensusError, Trace};
use statedecomp::indistinguishability::{self, IndistError, SuiteReport};
use statedecomp::metrics::{summarize, RunSummary, DEFAULT_TOLERANCE};
use statedecomp::streams::{stream_rng, Stream};
use statedecomp::run;
use thiserror::Error;

use crate::scenario::{Checks, Scenario, SeedRange};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error("adversary {name:?}: {source}")]
    Adversary { name: String, source: AdversaryError },
    #[error(transparent)]
    Indist(#[from] IndistError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {} (limit {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.limit
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub trace: Trace,
    /// Observer trajectories keyed by adversary name.
    pub observers: Vec<(String, Vec<f64>)>,
    pub summary: RunSummary,
    pub checks: Vec<CheckResult>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// First observer estimate, if any adversary runs one.
    pub fn estimate(&self) -> Option<Estimate> {
        self.summary.estimates.values().next().copied()
    }
}

pub fn execute(scenario: &Scenario) -> Result<RunOutput, RunError> {
    let trace = run(&scenario.config)?;
    let mut observers = Vec::new();
    let mut estimates = Vec::new();
    for adv in &scenario.adversaries {
        let Some(attack) = adv.attack() else { continue };
        let traj = attack.trajectory(&trace).map_err(|source| RunError::Adversary {
            name: adv.name.clone(),
            source,
        })?;
        estimates.push((adv.name.clone(), estimate_initial(&traj, trace.initial[attack.target])));
        observers.push((adv.name.clone(), traj));
    }
    let summary = summarize(&trace, &estimates, DEFAULT_TOLERANCE);
    let checks = evaluate_checks(&scenario.checks, &summary);
    Ok(RunOutput {
        scenario: scenario.clone(),
        trace,
        observers,
        summary,
        checks,
    })
}

pub fn evaluate_checks(checks: &Checks, s: &RunSummary) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut upper = |name: &str, value: f64, limit: Option<f64>| {
        if let Some(limit) = limit {
            out.push(CheckResult {
                name: name.to_string(),
                value,
                limit,
                passed: value < limit,
            });
        }
    };
    upper("consensus_error", s.final_consensus_error, checks.max_consensus_error);
    upper("conservation_drift", s.conservation_drift, checks.max_conservation_drift);
    upper("avg_err", s.avg_err, checks.max_avg_err);
    for (name, e) in &s.estimates {
        upper(&format!("est_err[{name}]"), e.est_err, checks.max_est_err);
    }
    if let Some(limit) = checks.min_est_err {
        for (name, e) in &s.estimates {
            out.push(CheckResult {
                name: format!("est_err[{name}] lower"),
                value: e.est_err,
                limit,
                passed: e.est_err > limit,
            });
        }
    }
    out
}

/// `round,node,role,value` rows: x, alpha and beta when present, and the
/// transmitted value.
pub fn trace_csv(trace: &Trace) -> String {
    let mut s = String::from("round,node,role,value\n");
    for (k, snap) in trace.rounds.iter().enumerate() {
        for i in 0..trace.node_count() {
            let _ = writeln!(s, "{k},{i},x,{}", snap.x[i]);
            if let Some(a) = &snap.alpha {
                let _ = writeln!(s, "{k},{i},alpha,{}", a[i]);
            }
            if let Some(b) = &snap.beta {
                let _ = writeln!(s, "{k},{i},beta,{}", b[i]);
            }
            let _ = writeln!(s, "{k},{i},transmitted,{}", snap.transmitted[i]);
        }
    }
    s
}

/// `round,edge,weight` rows. Coupling weights use the edge label `ab:<node>`.
pub fn weights_csv(trace: &Trace) -> String {
    let mut s = String::from("round,edge,weight\n");
    for (k, row) in trace.weights.rounds.iter().enumerate() {
        for (e, w) in trace.topology.edges().iter().zip(row) {
            let _ = writeln!(s, "{k},{e},{w}");
        }
        if let Some(ab) = &trace.alpha_beta {
            for (i, w) in ab.rounds[k].iter().enumerate() {
                let _ = writeln!(s, "{k},ab:{i},{w}");
            }
        }
    }
    s
}

pub fn observer_csv(target: usize, traj: &[f64]) -> String {
    let mut s = String::from("round,node,role,value\n");
    for (k, z) in traj.iter().enumerate() {
        let _ = writeln!(s, "{k},{target},observer_z,{z}");
    }
    s
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |r| r.to_string())
}

pub fn summary_text(out: &RunOutput) -> String {
    let s = &out.summary;
    let mut t = String::new();
    let _ = writeln!(t, "scenario = {}", out.scenario.name);
    let _ = writeln!(t, "protocol = {}", s.protocol);
    let _ = writeln!(t, "seed = {}", s.seed);
    let _ = writeln!(t, "horizon = {}", s.horizon);
    let _ = writeln!(t, "epsilon = {}", out.trace.epsilon);
    let _ = writeln!(t, "target = {}", s.target);
    let _ = writeln!(t, "final_consensus_error = {}", s.final_consensus_error);
    let _ = writeln!(t, "avg_err = {}", s.avg_err);
    let _ = writeln!(t, "tolerance = {}", s.tolerance);
    let _ = writeln!(t, "rounds_to_tolerance = {}", opt(s.rounds_to_tolerance));
    let _ = writeln!(t, "conservation_drift = {}", s.conservation_drift);
    for (name, e) in &s.estimates {
        let _ = writeln!(t, "estimate[{name}] = {}", e.estimate);
        let _ = writeln!(t, "est_err[{name}] = {}", e.est_err);
    }
    for w in &out.scenario.warnings {
        let _ = writeln!(t, "warning = {w}");
    }
    for c in &out.checks {
        let _ = writeln!(t, "check[{}] = {}", c.name, if c.passed { "pass" } else { "fail" });
    }
    t
}

pub fn summary_json(out: &RunOutput) -> String {
    let s = &out.summary;
    let estimates: serde_json::Map<String, serde_json::Value> = s
        .estimates
        .iter()
        .map(|(k, e)| (k.clone(), serde_json::json!({ "estimate": e.estimate, "est_err": e.est_err })))
        .collect();
    let checks: Vec<_> = out
        .checks
        .iter()
        .map(|c| serde_json::json!({ "name": c.name, "value": c.value, "limit": c.limit, "passed": c.passed }))
        .collect();
    let v = serde_json::json!({
        "scenario": out.scenario.name,
        "protocol": s.protocol,
        "seed": s.seed,
        "horizon": s.horizon,
        "epsilon": out.trace.epsilon,
        "target": s.target,
        "final_consensus_error": s.final_consensus_error,
        "avg_err": s.avg_err,
        "tolerance": s.tolerance,
        "rounds_to_tolerance": s.rounds_to_tolerance,
        "conservation_drift": s.conservation_drift,
        "estimates": estimates,
        "warnings": out.scenario.warnings,
        "checks": checks,
    });
    let mut text = serde_json::to_string_pretty(&v).expect("summary serializes");
    text.push('\n');
    text
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes `<root>/<name>/seed-<seed>/` and returns that directory.
pub fn write_outputs(out: &RunOutput, root: &Path) -> Result<PathBuf, RunError> {
    let dir = root
        .join(&out.scenario.name)
        .join(format!("seed-{}", out.trace.seed));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write(&dir.join("trace.csv"), &trace_csv(&out.trace))?;
    write(&dir.join("weights.csv"), &weights_csv(&out.trace))?;
    for ((name, traj), adv) in out
        .observers
        .iter()
        .zip(out.scenario.adversaries.iter().filter(|a| a.attack().is_some()))
    {
        let target = adv.target.expect("attacks have targets");
        write(&dir.join(format!("observer-{name}.csv")), &observer_csv(target, traj))?;
    }
    write(&dir.join("summary.txt"), &summary_text(out))?;
    write(&dir.join("summary.json"), &summary_json(out))?;
    Ok(dir)
}

/// Random alternate-world trials against the scenario's run. Trials draw
/// from the seed's trial stream.
pub fn indist_suite(scenario: &Scenario, trials: usize, tol: f64) -> Result<SuiteReport, RunError> {
    let trace = run(&scenario.config)?;
    let mut rng = stream_rng(scenario.config.seed, Stream::Trials);
    Ok(indistinguishability::run_suite(&trace, trials, tol, &mut rng)?)
}

pub fn suite_text(scenario: &Scenario, r: &SuiteReport) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "scenario = {}", scenario.name);
    let _ = writeln!(t, "seed = {}", scenario.config.seed);
    let _ = writeln!(t, "trials = {}", r.trials);
    let _ = writeln!(t, "passed = {}", r.passed);
    let _ = writeln!(t, "failed = {}", r.failed);
    let _ = writeln!(t, "degenerate = {}", r.degenerate);
    let _ = writeln!(t, "accomplice_detects = {}", r.expected_fail);
    let _ = writeln!(t, "accomplice_blind = {}", r.unexpected_pass);
    for f in &r.failures {
        let _ = writeln!(
            t,
            "failure = target {} accomplice {} altered {}",
            f.target, f.accomplice, f.altered_initial
        );
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub noise_scale: f64,
    pub seed: u64,
    pub avg_err: f64,
    pub est_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMedian {
    pub noise_scale: f64,
    pub avg_err: f64,
    pub est_err: Option<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Every (scale, seed) pair, run in parallel. Rows come back in input
/// order.
pub fn sweep(scenario: &Scenario, seeds: SeedRange, scales: &[f64]) -> Result<Vec<SweepRow>, RunError> {
    let jobs: Vec<(f64, u64)> = scales
        .iter()
        .flat_map(|&s| seeds.iter().map(move |seed| (s, seed)))
        .collect();
    jobs.par_iter()
        .map(|&(scale, seed)| {
            let out = execute(&scenario.with_noise_scale(scale).with_seed(seed))?;
            Ok(SweepRow {
                noise_scale: scale,
                seed,
                avg_err: out.summary.avg_err,
                est_err: out.estimate().map(|e| e.est_err),
            })
        })
        .collect()
}

pub fn sweep_medians(rows: &[SweepRow], scales: &[f64]) -> Vec<SweepMedian> {
    scales
        .iter()
        .map(|&scale| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.noise_scale == scale).collect();
            let mut avg: Vec<f64> = at.iter().map(|r| r.avg_err).collect();
            let mut est: Vec<f64> = at.iter().filter_map(|r| r.est_err).collect();
            SweepMedian {
                noise_scale: scale,
                avg_err: median(&mut avg).unwrap_or(f64::NAN),
                est_err: median(&mut est),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("noise_scale,seed,avg_err,est_err\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.noise_scale, r.seed, r.avg_err, cell(r.est_err));
    }
    s
}

pub fn medians_csv(medians: &[SweepMedian]) -> String {
    let mut s = String::from("noise_scale,median_avg_err,median_est_err\n");
    for m in medians {
        let _ = writeln!(s, "{},{},{}", m.noise_scale, m.avg_err, cell(m.est_err));
    }
    s
}

/// Writes `sweep.csv` and `sweep-medians.csv` under `<root>/<name>/`.
pub fn write_sweep(scenario: &Scenario, rows: &[SweepRow], medians: &[SweepMedian], root: &Path) -> Result<PathBuf, RunError> {
    let dir = root.join(&scenario.name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write(&dir.join("sweep.csv"), &sweep_csv(rows))?;
    write(&dir.join("sweep-medians.csv"), &medians_csv(medians))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn trace_csv_has_every_role() {
        let s = preset("paper-fig5").unwrap().with_horizon(2);
        let out = execute(&s).unwrap();
        let csv = trace_csv(&out.trace);
        assert_eq!(csv.lines().count(), 1 + 3 * 5 * 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0,x,1"));
        let w = weights_csv(&out.trace);
        assert_eq!(w.lines().count(), 1 + 3 * (5 + 5));
        assert!(w.contains("\n0,ab:4,"));
    }

    #[test]
    fn checks_compare_strictly() {
        let s = preset("paper-fig5").unwrap().with_horizon(5);
        let out = execute(&s).unwrap();
        let names: Vec<&str> = out.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["consensus_error", "conservation_drift", "est_err[eve] lower"]);
        assert!(!out.checks[0].passed);
        assert!(!out.passed());
    }
}
