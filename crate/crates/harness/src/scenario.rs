//! Scenario documents: TOML files (or bundled presets) describing one run.
//!
//! ```toml
//! schema_version = 1
//! name = "example"
//! protocol = "decomposed"        # standard | decomposed | correlated-noise | decaying-laplace
//! epsilon = 0.25
//! horizon = 500
//! seed = 7
//! initial = [1.0, 2.0, 3.0]
//!
//! [topology]
//! nodes = 3
//! edges = [[0, 1], [1, 2]]       # or: edge_probability = 0.5 (seeded, redrawn until connected)
//!
//! [weights]                       # edge weights
//! eta = 0.1
//! steady = { low = 0.1, high = 0.9 }   # or { constant = 0.75 }
//! round0 = { low = -20.0, high = 20.0 } # or { constant = .. } or "steady"
//!
//! [decomposition]
//! spread = 20.0
//! coupling = { eta = 0.1, steady = { low = 0.1, high = 0.9 }, round0 = { low = -20.0, high = 20.0 } }
//!
//! [noise]                         # obfuscation baselines only
//! decay = 0.9
//! scale = 1.0
//!
//! [[adversary]]
//! name = "eve"
//! kind = "eavesdropper"
//! wiretap = "all"                 # or [[0, 1], ...]
//! weights = "all"                 # or "none"
//! hidden_weights = [{ edge = [0, 1], round = 0 }]
//! target = 0
//! assumed_weight = 0.7
//!
//! [[adversary]]
//! name = "curious"
//! kind = "honest-but-curious"
//! node = 2
//!
//! [checks]
//! max_consensus_error = 1e-6
//! max_conservation_drift = 1e-9
//! max_avg_err = 1e-6
//! max_est_err = 0.05
//! min_est_err = 0.05
//!
//! [sweep]
//! seeds = "0..50"
//! noise_scales = [0.1, 1.0, 10.0]
//!
//! [output]
//! dir = "runs"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use statedecomp::adversary::{
    AdversarySpec, EavesdropperSpec, HiddenWeight, ObserverAttack, WeightAccess, DEFAULT_ASSUMED_WEIGHT,
};
use statedecomp::baselines::{NoiseParams, DEFAULT_DECAY, DEFAULT_NOISE_SCALE};
use statedecomp::consensus::{Protocol, RunConfig, DEFAULT_SPREAD};
use statedecomp::graph::{
    build_topology, epsilon_bound, is_connected, max_degree, random_connected, Round0Weights, SteadyWeights,
    WeightParams,
};
use statedecomp::streams::{stream_rng, Stream};
use statedecomp::{Edge, Topology};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HORIZON: usize = 500;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("unknown preset or missing file: {0}")]
    NotFound(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    schema_version: u32,
    name: String,
    protocol: String,
    epsilon: f64,
    #[serde(default)]
    horizon: Option<usize>,
    #[serde(default)]
    seed: u64,
    initial: Vec<f64>,
    topology: TopologyDoc,
    #[serde(default)]
    weights: Option<WeightsDoc>,
    #[serde(default)]
    decomposition: Option<DecompositionDoc>,
    #[serde(default)]
    noise: Option<NoiseDoc>,
    #[serde(default)]
    adversary: Vec<AdversaryDoc>,
    #[serde(default)]
    checks: Checks,
    #[serde(default)]
    sweep: Option<SweepDoc>,
    #[serde(default)]
    output: Option<OutputDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    nodes: usize,
    #[serde(default)]
    edges: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    edge_probability: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RuleDoc {
    Constant { constant: f64 },
    Uniform { low: f64, high: f64 },
    Keyword(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDoc {
    #[serde(default)]
    eta: Option<f64>,
    #[serde(default)]
    steady: Option<RuleDoc>,
    #[serde(default)]
    round0: Option<RuleDoc>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecompositionDoc {
    #[serde(default)]
    spread: Option<f64>,
    #[serde(default)]
    coupling: Option<WeightsDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseDoc {
    #[serde(default)]
    decay: Option<f64>,
    #[serde(default)]
    scale: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum WiretapDoc {
    Keyword(String),
    Edges(Vec<[usize; 2]>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HiddenDoc {
    edge: [usize; 2],
    #[serde(default)]
    round: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdversaryDoc {
    name: String,
    kind: String,
    #[serde(default)]
    node: Option<usize>,
    #[serde(default)]
    wiretap: Option<WiretapDoc>,
    #[serde(default)]
    weights: Option<String>,
    #[serde(default)]
    hidden_weights: Vec<HiddenDoc>,
    #[serde(default)]
    target: Option<usize>,
    #[serde(default)]
    assumed_weight: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    #[serde(default)]
    seeds: Option<String>,
    #[serde(default)]
    noise_scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    dir: PathBuf,
}

/// Thresholds checked against a run summary when `--check` is given.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    pub max_consensus_error: Option<f64>,
    pub max_conservation_drift: Option<f64>,
    pub max_avg_err: Option<f64>,
    pub max_est_err: Option<f64>,
    pub min_est_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Explicit(Topology),
    /// Drawn from the seed's topology stream.
    Random { nodes: usize, edge_probability: f64 },
}

impl TopologySource {
    fn materialize(&self, seed: u64) -> Topology {
        match self {
            TopologySource::Explicit(t) => t.clone(),
            TopologySource::Random { nodes, edge_probability } => {
                random_connected(*nodes, *edge_probability, &mut stream_rng(seed, Stream::Topology))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryEntry {
    pub name: String,
    pub spec: AdversarySpec,
    /// Observer target; eavesdroppers only.
    pub target: Option<usize>,
    pub assumed_weight: f64,
}

impl AdversaryEntry {
    pub fn attack(&self) -> Option<ObserverAttack> {
        match (&self.spec, self.target) {
            (AdversarySpec::Eavesdropper(eve), Some(target)) => Some(ObserverAttack {
                target,
                eavesdropper: eve.clone(),
                assumed_weights: BTreeMap::new(),
                default_weight: self.assumed_weight,
            }),
            _ => None,
        }
    }
}

/// Seed range `a..b` (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn parse(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("seed range {s:?} is not of the form a..b"))?;
        let start = a.trim().parse().map_err(|_| format!("bad seed range start {a:?}"))?;
        let end = b.trim().parse().map_err(|_| format!("bad seed range end {b:?}"))?;
        if end <= start {
            return Err(format!("seed range {s:?} is empty"));
        }
        Ok(SeedRange { start, end })
    }

    pub fn iter(self) -> impl Iterator<Item = u64> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDefaults {
    pub seeds: Option<SeedRange>,
    pub noise_scales: Option<Vec<f64>>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: RunConfig,
    pub topology: TopologySource,
    pub adversaries: Vec<AdversaryEntry>,
    pub checks: Checks,
    pub sweep: Option<SweepDefaults>,
    pub out_dir: Option<PathBuf>,
    /// Non-fatal findings, e.g. a step size above the stability bound.
    pub warnings: Vec<String>,
}

impl Scenario {
    /// Same scenario under another master seed. Random topologies are
    /// redrawn from the new seed.
    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.config.seed = seed;
        s.config.topology = s.topology.materialize(seed);
        s
    }

    pub fn with_horizon(&self, horizon: usize) -> Scenario {
        let mut s = self.clone();
        s.config.horizon = horizon;
        s
    }

    pub fn with_noise_scale(&self, scale: f64) -> Scenario {
        let mut s = self.clone();
        s.config.noise.scale = scale;
        s
    }
}

fn rule_steady(rule: &RuleDoc, what: &str, errs: &mut Vec<String>) -> Option<SteadyWeights> {
    match rule {
        RuleDoc::Constant { constant } => Some(SteadyWeights::Constant(*constant)),
        RuleDoc::Uniform { low, high } => Some(SteadyWeights::Uniform { low: *low, high: *high }),
        RuleDoc::Keyword(k) => {
            errs.push(format!("{what}.steady: unexpected {k:?}"));
            None
        }
    }
}

fn rule_round0(rule: &RuleDoc, what: &str, errs: &mut Vec<String>) -> Option<Round0Weights> {
    match rule {
        RuleDoc::Constant { constant } => Some(Round0Weights::Constant(*constant)),
        RuleDoc::Uniform { low, high } => Some(Round0Weights::Uniform { low: *low, high: *high }),
        RuleDoc::Keyword(k) if k == "steady" => Some(Round0Weights::Steady),
        RuleDoc::Keyword(k) => {
            errs.push(format!("{what}.round0: unexpected {k:?}"));
            None
        }
    }
}

fn weight_params(doc: Option<&WeightsDoc>, what: &str, errs: &mut Vec<String>) -> WeightParams {
    let mut p = WeightParams::default();
    let Some(doc) = doc else { return p };
    if let Some(eta) = doc.eta {
        p.eta = eta;
    }
    if let Some(s) = doc.steady.as_ref().and_then(|r| rule_steady(r, what, errs)) {
        p.steady = s;
    }
    if let Some(r) = doc.round0.as_ref().and_then(|r| rule_round0(r, what, errs)) {
        p.round0 = r;
    }
    if let Err(e) = p.check() {
        errs.push(format!("{what}: {e}"));
    }
    p
}

fn edge_in(t: &Topology, [a, b]: [usize; 2], what: &str, errs: &mut Vec<String>) -> Option<Edge> {
    if a < t.node_count() && b < t.node_count() && t.has_edge(a, b) {
        Some(Edge::new(a, b))
    } else {
        errs.push(format!("{what}: edge [{a}, {b}] is not in the topology"));
        None
    }
}

fn adversary(doc: &AdversaryDoc, t: &Topology, errs: &mut Vec<String>) -> Option<AdversaryEntry> {
    let what = format!("adversary {:?}", doc.name);
    let n = t.node_count();
    let assumed_weight = doc.assumed_weight.unwrap_or(DEFAULT_ASSUMED_WEIGHT);
    match doc.kind.as_str() {
        "honest-but-curious" => {
            let Some(node) = doc.node else {
                errs.push(format!("{what}: honest-but-curious adversary needs `node`"));
                return None;
            };
            if node >= n {
                errs.push(format!("{what}: node {node} out of range"));
                return None;
            }
            if doc.target.is_some() || doc.wiretap.is_some() || !doc.hidden_weights.is_empty() {
                errs.push(format!("{what}: target/wiretap/hidden_weights apply to eavesdroppers only"));
            }
            Some(AdversaryEntry {
                name: doc.name.clone(),
                spec: AdversarySpec::HonestButCurious { node },
                target: None,
                assumed_weight,
            })
        }
        "eavesdropper" => {
            let wiretap = match &doc.wiretap {
                None => t.edges().to_vec(),
                Some(WiretapDoc::Keyword(k)) if k == "all" => t.edges().to_vec(),
                Some(WiretapDoc::Keyword(k)) if k == "none" => Vec::new(),
                Some(WiretapDoc::Keyword(k)) => {
                    errs.push(format!("{what}: wiretap must be \"all\", \"none\" or a list of edges, got {k:?}"));
                    Vec::new()
                }
                Some(WiretapDoc::Edges(es)) => es.iter().filter_map(|&e| edge_in(t, e, &what, errs)).collect(),
            };
            let hidden: Vec<HiddenWeight> = doc
                .hidden_weights
                .iter()
                .filter_map(|h| edge_in(t, h.edge, &what, errs).map(|edge| HiddenWeight { edge, round: h.round }))
                .collect();
            let weights = match doc.weights.as_deref() {
                None | Some("all") => WeightAccess::AllExcept(hidden),
                Some("none") => {
                    if !hidden.is_empty() {
                        errs.push(format!("{what}: hidden_weights given but weights = \"none\""));
                    }
                    WeightAccess::None
                }
                Some(other) => {
                    errs.push(format!("{what}: weights must be \"all\" or \"none\", got {other:?}"));
                    WeightAccess::None
                }
            };
            if let Some(target) = doc.target {
                if target >= n {
                    errs.push(format!("{what}: target {target} out of range"));
                }
            }
            if doc.node.is_some() {
                errs.push(format!("{what}: `node` applies to honest-but-curious adversaries only"));
            }
            Some(AdversaryEntry {
                name: doc.name.clone(),
                spec: AdversarySpec::Eavesdropper(EavesdropperSpec { wiretap, weights }),
                target: doc.target,
                assumed_weight,
            })
        }
        other => {
            errs.push(format!("{what}: unknown kind {other:?}"));
            None
        }
    }
}

/// Parses and validates a scenario document. Every validation problem is
/// reported at once.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    if text.trim().is_empty() {
        return Err(ScenarioError::Parse("empty scenario document".into()));
    }
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut errs = Vec::new();
    let mut warnings = Vec::new();

    if doc.schema_version != SCHEMA_VERSION {
        errs.push(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            doc.schema_version
        ));
    }
    let protocol = Protocol::parse(&doc.protocol).unwrap_or_else(|| {
        errs.push(format!("unknown protocol {:?}", doc.protocol));
        Protocol::Standard
    });
    if !(doc.epsilon > 0.0 && doc.epsilon.is_finite()) {
        errs.push(format!("epsilon must be positive, got {}", doc.epsilon));
    }

    let source = match (&doc.topology.edges, doc.topology.edge_probability) {
        (Some(edges), None) => {
            let pairs: Vec<(usize, usize)> = edges.iter().map(|[a, b]| (*a, *b)).collect();
            match build_topology(doc.topology.nodes, &pairs) {
                Ok(t) => Some(TopologySource::Explicit(t)),
                Err(e) => {
                    errs.push(format!("topology: {e}"));
                    None
                }
            }
        }
        (None, Some(p)) if doc.topology.nodes > 0 && p > 0.0 && p <= 1.0 => Some(TopologySource::Random {
            nodes: doc.topology.nodes,
            edge_probability: p,
        }),
        (None, Some(p)) => {
            errs.push(format!(
                "topology: random graphs need nodes > 0 and edge_probability in (0, 1], got {} and {p}",
                doc.topology.nodes
            ));
            None
        }
        _ => {
            errs.push("topology: give exactly one of `edges` or `edge_probability`".into());
            None
        }
    };
    let topology = source.as_ref().map(|s| s.materialize(doc.seed));

    if let Some(t) = &topology {
        if !is_connected(t) {
            errs.push("topology is not connected".into());
        }
        if doc.initial.len() != t.node_count() {
            errs.push(format!(
                "initial has {} values for {} nodes",
                doc.initial.len(),
                t.node_count()
            ));
        }
        let decomposed = protocol == Protocol::Decomposed;
        match epsilon_bound(max_degree(t), decomposed) {
            Ok(b) if !b.admits(doc.epsilon) => warnings.push(format!(
                "epsilon {} exceeds the stability bound {} for max degree {}{}",
                doc.epsilon,
                b.upper,
                max_degree(t),
                if decomposed { " with decomposition" } else { "" }
            )),
            _ => {}
        }
    }
    if doc.initial.iter().any(|v| !v.is_finite()) {
        errs.push("initial values must be finite".into());
    }

    let edge_weights = weight_params(doc.weights.as_ref(), "weights", &mut errs);
    let decomposition = doc.decomposition.clone().unwrap_or_default();
    let alpha_beta_weights = weight_params(decomposition.coupling.as_ref(), "decomposition.coupling", &mut errs);
    let spread = decomposition.spread.unwrap_or(DEFAULT_SPREAD);
    if !(spread > 0.0 && spread.is_finite()) {
        errs.push(format!("decomposition.spread must be positive, got {spread}"));
    }
    let noise = NoiseParams {
        decay: doc.noise.as_ref().and_then(|n| n.decay).unwrap_or(DEFAULT_DECAY),
        scale: doc.noise.as_ref().and_then(|n| n.scale).unwrap_or(DEFAULT_NOISE_SCALE),
    };
    if !(noise.decay > 0.0 && noise.decay < 1.0) {
        errs.push(format!("noise.decay must be in (0, 1), got {}", noise.decay));
    }
    if !(noise.scale >= 0.0 && noise.scale.is_finite()) {
        errs.push(format!("noise.scale must be nonnegative, got {}", noise.scale));
    }

    let mut adversaries = Vec::new();
    if let Some(t) = &topology {
        let mut names = std::collections::BTreeSet::new();
        for a in &doc.adversary {
            if !names.insert(a.name.clone()) {
                errs.push(format!("duplicate adversary name {:?}", a.name));
            }
            if let Some(entry) = adversary(a, t, &mut errs) {
                adversaries.push(entry);
            }
        }
    }

    let sweep = doc.sweep.as_ref().map(|s| SweepDefaults {
        seeds: s.seeds.as_deref().and_then(|r| {
            SeedRange::parse(r)
                .map_err(|e| errs.push(format!("sweep.seeds: {e}")))
                .ok()
        }),
        noise_scales: s.noise_scales.clone(),
    });

    if !errs.is_empty() {
        return Err(ScenarioError::Validation(errs));
    }
    let topology = topology.expect("validated");
    Ok(Scenario {
        name: doc.name,
        config: RunConfig {
            topology,
            protocol,
            epsilon: doc.epsilon,
            initial: doc.initial,
            horizon: doc.horizon.unwrap_or(DEFAULT_HORIZON),
            seed: doc.seed,
            edge_weights,
            alpha_beta_weights,
            spread,
            noise,
        },
        topology: source.expect("validated"),
        adversaries,
        checks: doc.checks,
        sweep,
        out_dir: doc.output.map(|o| o.dir),
        warnings,
    })
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_scenario(&text)
}

/// A file path if one exists, otherwise a preset name.
pub fn resolve(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if path.is_file() {
        return load_scenario_file(path);
    }
    match preset_text(arg) {
        Some(text) => load_scenario(text),
        None => Err(ScenarioError::NotFound(arg.to_string())),
    }
}

const FIVE_NODE_COMMON: &str = r#"
schema_version = 1
epsilon = 0.3333333333333333
initial = [1.0, 2.0, 3.0, 4.0, 5.0]

[topology]
nodes = 5
edges = [[0, 1], [0, 4], [1, 2], [2, 4], [3, 4]]

[[adversary]]
name = "eve"
kind = "eavesdropper"
wiretap = "all"
weights = "all"
hidden_weights = [{ edge = [0, 1], round = 0 }]
target = 0
assumed_weight = 0.7
"#;

const FIG3: &str = r#"
name = "paper-fig3"
protocol = "correlated-noise"
horizon = 200
seed = 0

[weights]
eta = 0.1
steady = { constant = 0.75 }
round0 = "steady"

[noise]
decay = 0.9
scale = 1.0

[checks]
max_avg_err = 1e-6
max_est_err = 0.05
"#;

const FIG4: &str = r#"
name = "paper-fig4"
protocol = "correlated-noise"
horizon = 200
seed = 0

[weights]
eta = 0.1
steady = { constant = 0.75 }
round0 = "steady"

[noise]
decay = 0.9
scale = 1.0

[checks]
max_avg_err = 1e-6
max_est_err = 0.05
"#;

const FIG5: &str = r#"
name = "paper-fig5"
protocol = "decomposed"
horizon = 500
seed = 0

[weights]
eta = 0.1
steady = { constant = 0.75 }
round0 = { low = -20.0, high = 20.0 }

[decomposition]
spread = 20.0
coupling = { eta = 0.1, steady = { low = 0.1, high = 0.9 }, round0 = { low = -20.0, high = 20.0 } }

[[adversary]]
name = "node5"
kind = "honest-but-curious"
node = 4

[checks]
max_consensus_error = 1e-6
max_conservation_drift = 1e-9
min_est_err = 0.05
"#;

const FIG6: &str = r#"
name = "paper-fig6"
protocol = "decaying-laplace"
horizon = 500
seed = 0

[weights]
eta = 0.1
steady = { constant = 0.75 }
round0 = "steady"

[noise]
decay = 0.9
scale = 1.0

[sweep]
seeds = "0..50"
noise_scales = [0.1, 1.0, 10.0]
"#;

/// Bundled presets: five-node comparison setup under each protocol.
/// `paper-fig4` shares the correlated-noise setup of `paper-fig3`.
pub const PRESETS: [&str; 4] = ["paper-fig3", "paper-fig4", "paper-fig5", "paper-fig6"];

fn preset_body(name: &str) -> Option<&'static str> {
    match name {
        "paper-fig3" => Some(FIG3),
        "paper-fig4" => Some(FIG4),
        "paper-fig5" => Some(FIG5),
        "paper-fig6" => Some(FIG6),
        _ => None,
    }
}

/// Full TOML text of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    use std::sync::OnceLock;
    static TEXTS: OnceLock<BTreeMap<&'static str, String>> = OnceLock::new();
    let texts = TEXTS.get_or_init(|| {
        PRESETS
            .iter()
            .map(|&n| {
                // top-level keys must precede the first table
                let body = preset_body(n).expect("listed preset");
                let (head, tables) = body.split_at(body.find("\n[").unwrap_or(body.len()));
                let (common_head, common_tables) = FIVE_NODE_COMMON.split_at(FIVE_NODE_COMMON.find("\n[").expect("tables"));
                (n, format!("{head}{common_head}\n{tables}\n{common_tables}"))
            })
            .collect()
    });
    texts.get(name).map(String::as_str)
}

pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let text = preset_text(name).ok_or_else(|| ScenarioError::NotFound(name.to_string()))?;
    load_scenario(text)
}
