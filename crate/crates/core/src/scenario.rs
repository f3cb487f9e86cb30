//! File formats: plain edge lists and JSON scenarios.
//!
//! Node labels are arbitrary tokens. When every label is an integer the
//! internal ids follow numeric order, otherwise they follow first appearance.
//! A scenario file may list its labels explicitly to fix the order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId};
use crate::mgrid::{
    Algorithm, AvailabilityKind, ControlGains, ConverterParams, LoadStep, Scenario, SecondaryConfig, SimError,
    TriggerPolicy,
};
use crate::redistribution::CostSpec;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    EdgeList { line: usize, message: String },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown node label {0:?}")]
    UnknownLabel(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A graph together with the external names of its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub labels: Vec<String>,
}

impl LabeledGraph {
    pub fn node(&self, label: &str) -> Result<NodeId, ScenarioError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ScenarioError::UnknownLabel(label.to_string()))
    }

    /// Parses a comma- or whitespace-separated list of labels.
    pub fn parse_nodes(&self, spec: &str) -> Result<Vec<NodeId>, ScenarioError> {
        spec.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| self.node(t))
            .collect()
    }
}

/// Assigns ids to labels: numeric order if all are integers, else first
/// appearance.
fn order_labels(appearance: Vec<String>) -> Vec<String> {
    let numeric: Option<Vec<i64>> = appearance.iter().map(|l| l.parse::<i64>().ok()).collect();
    match numeric {
        Some(mut nums) => {
            let mut labels = appearance;
            nums.sort_unstable();
            let by_value: HashMap<i64, String> = labels.drain(..).map(|l| (l.parse().unwrap(), l)).collect();
            nums.iter().map(|v| by_value[v].clone()).collect()
        }
        None => appearance,
    }
}

fn first_appearance<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for t in tokens {
        if seen.insert(t) {
            out.push(t.to_string());
        }
    }
    out
}

/// First non-comment line is the node count, then one `i j` pair per line.
/// A line with a single label declares an isolated node.
pub fn parse_edge_list(text: &str) -> Result<LabeledGraph, ScenarioError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, header) = lines.next().ok_or(ScenarioError::EdgeList {
        line: 1,
        message: "empty file".into(),
    })?;
    let n: usize = header.parse().map_err(|_| ScenarioError::EdgeList {
        line: first,
        message: format!("expected node count, got {header:?}"),
    })?;
    let mut pairs = Vec::new();
    let mut tokens = Vec::new();
    for (line, l) in lines {
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            [v] => tokens.push(*v),
            [a, b] => {
                tokens.push(*a);
                tokens.push(*b);
                pairs.push((*a, *b, line));
            }
            _ => {
                return Err(ScenarioError::EdgeList {
                    line,
                    message: format!("expected \"i j\", got {l:?}"),
                })
            }
        }
    }
    let labels = order_labels(first_appearance(tokens));
    if labels.len() != n {
        return Err(ScenarioError::EdgeList {
            line: first,
            message: format!("header declares {n} nodes but {} distinct labels appear", labels.len()),
        });
    }
    let index: HashMap<&str, NodeId> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut edges = Vec::with_capacity(pairs.len());
    for (a, b, line) in pairs {
        if a == b {
            return Err(ScenarioError::EdgeList {
                line,
                message: format!("self-loop on {a}"),
            });
        }
        edges.push((index[a], index[b]));
    }
    Ok(LabeledGraph {
        graph: Graph::new(n, &edges)?,
        labels,
    })
}

/// Reads an edge list, or the graph section of a JSON scenario.
pub fn parse_graph(text: &str) -> Result<LabeledGraph, ScenarioError> {
    if text.trim_start().starts_with('{') {
        let s = parse_scenario(text)?;
        Ok(LabeledGraph {
            graph: s.graph,
            labels: s.labels,
        })
    } else {
        parse_edge_list(text)
    }
}

/// Label written either as a JSON string or an integer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Text(String),
}

impl Label {
    fn text(&self) -> String {
        match self {
            Label::Int(v) => v.to_string(),
            Label::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub a: Label,
    pub b: Label,
    /// Line conductance (S); the section default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
    pub edges: Vec<EdgeEntry>,
    #[serde(default = "one")]
    pub conductance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConverterSpec {
    pub resistance: f64,
    pub inductance: f64,
    pub capacitance: f64,
    pub input_voltage: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for ConverterSpec {
    fn default() -> Self {
        let p = ConverterParams::default();
        Self {
            resistance: p.resistance,
            inductance: p.inductance,
            capacitance: p.capacitance,
            input_voltage: p.input_voltage,
            u_min: 0.0,
            u_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resistance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inductance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacitance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_voltage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
}

impl ConverterSpec {
    fn patched(mut self, p: &ConverterPatch) -> Self {
        self.resistance = p.resistance.unwrap_or(self.resistance);
        self.inductance = p.inductance.unwrap_or(self.inductance);
        self.capacitance = p.capacitance.unwrap_or(self.capacitance);
        self.input_voltage = p.input_voltage.unwrap_or(self.input_voltage);
        self.u_min = p.u_min.unwrap_or(self.u_min);
        self.u_max = p.u_max.unwrap_or(self.u_max);
        self
    }

    fn diff(&self, other: &ConverterSpec) -> ConverterPatch {
        let d = |a: f64, b: f64| (a != b).then_some(b);
        ConverterPatch {
            resistance: d(self.resistance, other.resistance),
            inductance: d(self.inductance, other.inductance),
            capacitance: d(self.capacitance, other.capacitance),
            input_voltage: d(self.input_voltage, other.input_voltage),
            u_min: d(self.u_min, other.u_min),
            u_max: d(self.u_max, other.u_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConverterSection {
    pub default: ConverterSpec,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, ConverterPatch>,
    pub gains: ControlGains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeValues {
    pub default: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub t: f64,
    pub node: Label,
    pub load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    SaturationRisk,
    Scheduled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecondarySection {
    pub policy: PolicyKind,
    pub threshold: f64,
    pub dwell: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    pub availability: AvailabilityKind,
    pub cost: CostSpec,
    pub algorithm: Algorithm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub max_k: usize,
}

impl Default for SecondarySection {
    fn default() -> Self {
        let cfg = SecondaryConfig::default();
        let TriggerPolicy::SaturationRisk { threshold, dwell } = cfg.policy else {
            unreachable!("default policy is event driven")
        };
        Self {
            policy: PolicyKind::SaturationRisk,
            threshold,
            dwell,
            times: Vec::new(),
            availability: cfg.availability,
            cost: cfg.cost,
            algorithm: cfg.algorithm,
            max_steps: cfg.max_steps,
            max_k: cfg.max_k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub h: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            h: 1e-4,
            horizon: 1.0,
            seed: 0,
        }
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub graph: GraphSection,
    #[serde(default)]
    pub converters: ConverterSection,
    pub references: NodeValues,
    pub loads: NodeValues,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub secondary: SecondarySection,
    #[serde(default)]
    pub sim: SimSection,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let g = &self.graph;
        let labels: Vec<String> = match &g.labels {
            Some(ls) => ls.iter().map(Label::text).collect(),
            None => order_labels(first_appearance(
                g.edges
                    .iter()
                    .flat_map(|e| [e.a.text(), e.b.text()])
                    .collect::<Vec<_>>()
                    .iter()
                    .map(String::as_str),
            )),
        };
        if labels.len() != g.n {
            return Err(ScenarioError::Invalid(format!(
                "graph declares {} nodes but {} labels are known",
                g.n,
                labels.len()
            )));
        }
        let index: HashMap<&str, NodeId> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        if index.len() != labels.len() {
            return Err(ScenarioError::Invalid("duplicate node label".into()));
        }
        let id = |l: &str| {
            index
                .get(l)
                .copied()
                .ok_or_else(|| ScenarioError::UnknownLabel(l.to_string()))
        };

        let mut weighted = BTreeMap::new();
        for e in &g.edges {
            let (a, b) = (id(&e.a.text())?, id(&e.b.text())?);
            if a == b {
                return Err(GraphError::SelfLoop(a).into());
            }
            let key = (a.min(b), a.max(b));
            let w = e.g.unwrap_or(g.conductance);
            if weighted.insert(key, w).is_some_and(|old| old != w) {
                return Err(ScenarioError::Invalid(format!(
                    "edge {}-{} listed twice with different conductances",
                    labels[key.0], labels[key.1]
                )));
            }
        }
        let edges: Vec<(NodeId, NodeId)> = weighted.keys().copied().collect();
        let graph = Graph::new(g.n, &edges)?;
        let conductance: Vec<f64> = graph.edges().iter().map(|e| weighted[e]).collect();

        let mut specs = vec![self.converters.default; g.n];
        for (l, patch) in &self.converters.overrides {
            let i = id(l)?;
            specs[i] = specs[i].patched(patch);
        }
        let per_node = |v: &NodeValues| -> Result<Vec<f64>, ScenarioError> {
            let mut out = vec![v.default; g.n];
            for (l, x) in &v.overrides {
                out[id(l)?] = *x;
            }
            Ok(out)
        };
        let references = per_node(&self.references)?;
        let loads = per_node(&self.loads)?;
        let mut schedule = Vec::with_capacity(self.schedule.len());
        for s in &self.schedule {
            schedule.push(LoadStep {
                time: s.t,
                node: id(&s.node.text())?,
                load: s.load,
            });
        }
        // Stable: entries at equal times keep file order.
        schedule.sort_by(|a, b| a.time.total_cmp(&b.time));

        let sec = &self.secondary;
        let policy = match sec.policy {
            PolicyKind::SaturationRisk => TriggerPolicy::SaturationRisk {
                threshold: sec.threshold,
                dwell: sec.dwell,
            },
            PolicyKind::Scheduled => TriggerPolicy::Scheduled {
                times: {
                    let mut t = sec.times.clone();
                    t.sort_by(f64::total_cmp);
                    t
                },
            },
        };
        let scenario = Scenario {
            graph,
            labels,
            conductance,
            converters: specs
                .iter()
                .map(|s| ConverterParams {
                    resistance: s.resistance,
                    inductance: s.inductance,
                    capacitance: s.capacitance,
                    input_voltage: s.input_voltage,
                })
                .collect(),
            gains: self.converters.gains,
            duty_bounds: specs.iter().map(|s| (s.u_min, s.u_max)).collect(),
            references,
            loads,
            schedule,
            secondary: SecondaryConfig {
                policy,
                algorithm: sec.algorithm,
                availability: sec.availability,
                cost: sec.cost,
                max_steps: sec.max_steps,
                max_k: sec.max_k,
            },
            step: self.sim.h,
            horizon: self.sim.horizon,
            seed: self.sim.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Canonical document for a scenario: explicit labels and per-edge
    /// conductances, node 0's values as defaults.
    pub fn from_scenario(s: &Scenario) -> Self {
        let n = s.node_count();
        let spec = |i: NodeId| ConverterSpec {
            resistance: s.converters[i].resistance,
            inductance: s.converters[i].inductance,
            capacitance: s.converters[i].capacitance,
            input_voltage: s.converters[i].input_voltage,
            u_min: s.duty_bounds[i].0,
            u_max: s.duty_bounds[i].1,
        };
        let base = if n > 0 { spec(0) } else { ConverterSpec::default() };
        let overrides = (0..n)
            .filter_map(|i| {
                let d = base.diff(&spec(i));
                (d != ConverterPatch::default()).then(|| (s.labels[i].clone(), d))
            })
            .collect();
        let values = |v: &[f64]| {
            let default = v.first().copied().unwrap_or(0.0);
            NodeValues {
                default,
                overrides: v
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| **x != default)
                    .map(|(i, x)| (s.labels[i].clone(), *x))
                    .collect(),
            }
        };
        let text = |i: NodeId| Label::Text(s.labels[i].clone());
        let mut secondary = SecondarySection {
            availability: s.secondary.availability,
            cost: s.secondary.cost,
            algorithm: s.secondary.algorithm,
            max_steps: s.secondary.max_steps,
            max_k: s.secondary.max_k,
            ..SecondarySection::default()
        };
        match &s.secondary.policy {
            TriggerPolicy::SaturationRisk { threshold, dwell } => {
                secondary.threshold = *threshold;
                secondary.dwell = *dwell;
            }
            TriggerPolicy::Scheduled { times } => {
                secondary.policy = PolicyKind::Scheduled;
                secondary.times.clone_from(times);
            }
        }
        ScenarioFile {
            graph: GraphSection {
                n,
                labels: Some((0..n).map(text).collect()),
                edges: s
                    .graph
                    .edges()
                    .iter()
                    .zip(&s.conductance)
                    .map(|(&(a, b), &g)| EdgeEntry {
                        a: text(a),
                        b: text(b),
                        g: Some(g),
                    })
                    .collect(),
                conductance: 1.0,
            },
            converters: ConverterSection {
                default: base,
                overrides,
                gains: s.gains,
            },
            references: values(&s.references),
            loads: values(&s.loads),
            schedule: s
                .schedule
                .iter()
                .map(|l| ScheduleEntry {
                    t: l.time,
                    node: text(l.node),
                    load: l.load,
                })
                .collect(),
            secondary,
            sim: SimSection {
                h: s.step,
                horizon: s.horizon,
                seed: s.seed,
            },
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    serde_json::from_str::<ScenarioFile>(text)?.into_scenario()
}

pub fn scenario_to_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("scenario documents always serialize")
}

const BUNDLED_20: &str = include_str!("../scenarios/bundled_20.json");

/// The 20-node reference scenario shipped with the crate.
pub fn bundled_scenario() -> Scenario {
    parse_scenario(BUNDLED_20).expect("bundled scenario is valid")
}

pub fn bundled_scenario_json() -> &'static str {
    BUNDLED_20
}
