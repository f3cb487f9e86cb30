//! Averaged DC-microgrid simulator.
//!
//! Each node is a buck converter feeding a capacitor bus:
//!
//! ```text
//!     C dV/dt = I + xi - d
//!     L dI/dt = -V - R I + V_in u
//! ```
//!
//! with `xi` the net line current into the node. A local primary loop tracks
//! the node's voltage reference. A secondary layer watches duty cycles and,
//! on a saturation risk, picks a cluster around the overloaded node and
//! shifts the cluster's references without changing any line current seen by
//! the rest of the network.

pub mod analysis;
pub mod export;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    dof_greedy_cluster, ksteps_greedy, Availability, GreedyOutcome, KStepsOutcome, SearchError, TraceStep,
};
use crate::graph::{Graph, NodeId};
use crate::redistribution::{
    CostSpec, MicrogridOracle, RedistributionError, RedistributionSolution, SteadyStateNetwork,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("non-finite state at node {node}, t = {t} s")]
    NonFinite { t: f64, node: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    /// Ohm.
    pub resistance: f64,
    /// Henry.
    pub inductance: f64,
    /// Farad.
    pub capacitance: f64,
    /// Volt.
    pub input_voltage: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self {
            resistance: 0.2,
            inductance: 1.8e-3,
            capacitance: 2.2e-3,
            input_voltage: 24.0,
        }
    }
}

impl ConverterParams {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.resistance, self.inductance, self.capacitance, self.input_voltage];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(format!("converter parameters must be positive: {self:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGains {
    /// 1/V.
    pub kp: f64,
    /// 1/(V s).
    pub ki: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self { kp: 0.05, ki: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeState {
    pub voltage: f64,
    pub current: f64,
    /// Integral of the voltage tracking error (V s).
    pub integral: f64,
}

impl NodeState {
    fn is_finite(&self) -> bool {
        self.voltage.is_finite() && self.current.is_finite() && self.integral.is_finite()
    }
}

/// `(dV/dt, dI/dt)` of one converter.
pub fn derivative(p: &ConverterParams, s: &NodeState, duty: f64, xi: f64, load: f64) -> (f64, f64) {
    let dv = (s.current + xi - load) / p.capacitance;
    let di = (-s.voltage - p.resistance * s.current + p.input_voltage * duty) / p.inductance;
    (dv, di)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlAction {
    pub duty: f64,
    /// The unclamped command left `[0, 1]`; the integrator is frozen.
    pub saturated: bool,
}

/// Feedforward of the steady-state duty plus PI correction on the voltage
/// error, clamped to `[0, 1]`.
pub fn primary_control(
    p: &ConverterParams,
    gains: &ControlGains,
    s: &NodeState,
    reference: f64,
    xi: f64,
    load: f64,
) -> ControlAction {
    let feedforward = (reference + p.resistance * (load - xi)) / p.input_voltage;
    let raw = feedforward + gains.kp * (reference - s.voltage) + gains.ki * s.integral;
    ControlAction {
        duty: raw.clamp(0.0, 1.0),
        saturated: !(0.0..=1.0).contains(&raw),
    }
}

/// `Psi_i = |d_i| (1 - |u_i - 1/2|)`.
pub fn availability_measure(loads: &[f64], duties: &[f64]) -> Availability {
    let scores = loads
        .iter()
        .zip(duties)
        .map(|(d, u)| d.abs() * (1.0 - (u - 0.5).abs()))
        .collect();
    Availability::new(scores).expect("finite inputs give finite scores")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dof,
    Ksteps,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvailabilityKind {
    /// Load-weighted distance of the duty cycle from one half.
    Balance,
    /// All nodes equal; ties resolve by node id.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerPolicy {
    /// Fire when a node's duty cycle stays outside
    /// `[max(u_min, 0.5 - threshold), min(u_max, 0.5 + threshold)]` for `dwell`
    /// seconds.
    SaturationRisk { threshold: f64, dwell: f64 },
    /// Re-optimize at fixed instants around the node with the largest bound
    /// violation, if any.
    Scheduled { times: Vec<f64> },
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        TriggerPolicy::SaturationRisk {
            threshold: 0.35,
            dwell: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryConfig {
    pub policy: TriggerPolicy,
    pub algorithm: Algorithm,
    pub availability: AvailabilityKind,
    pub cost: CostSpec,
    /// Growth budget of the dof search; `None` means `n - 1`.
    pub max_steps: Option<usize>,
    /// Largest radius tried by the k-steps baseline.
    pub max_k: usize,
}

impl Default for SecondaryConfig {
    fn default() -> Self {
        Self {
            policy: TriggerPolicy::default(),
            algorithm: Algorithm::Dof,
            availability: AvailabilityKind::Balance,
            cost: CostSpec::default(),
            max_steps: None,
            max_k: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStep {
    pub time: f64,
    pub node: NodeId,
    /// New load current (A).
    pub load: f64,
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: Graph,
    pub labels: Vec<String>,
    /// Siemens, indexed like `graph.edges()`.
    pub conductance: Vec<f64>,
    pub converters: Vec<ConverterParams>,
    pub gains: ControlGains,
    pub duty_bounds: Vec<(f64, f64)>,
    pub references: Vec<f64>,
    pub loads: Vec<f64>,
    /// Sorted by time.
    pub schedule: Vec<LoadStep>,
    pub secondary: SecondaryConfig,
    /// Integrator step (s).
    pub step: f64,
    /// Simulated time (s).
    pub horizon: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.node_count();
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.labels.len() != n
            || self.converters.len() != n
            || self.duty_bounds.len() != n
            || self.references.len() != n
            || self.loads.len() != n
        {
            return bad("per-node arrays must have one entry per node".into());
        }
        if self.conductance.len() != self.graph.edges().len() {
            return bad("one conductance per edge required".into());
        }
        if !self.graph.is_connected() {
            return bad("graph is not connected".into());
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("integrator step must be positive, got {}", self.step));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return bad(format!("horizon must be non-negative, got {}", self.horizon));
        }
        for (i, c) in self.converters.iter().enumerate() {
            c.validate()
                .map_err(|m| SimError::InvalidScenario(format!("node {}: {m}", self.labels[i])))?;
        }
        for w in self.schedule.windows(2) {
            if w[1].time < w[0].time {
                return bad("schedule must be sorted by time".into());
            }
        }
        for s in &self.schedule {
            if !(0.0..=self.horizon).contains(&s.time) || s.node >= n || !s.load.is_finite() {
                return bad(format!("schedule entry {s:?} outside horizon or node range"));
            }
        }
        if let TriggerPolicy::SaturationRisk { threshold, dwell } = self.secondary.policy {
            if !(threshold >= 0.0 && dwell >= 0.0) {
                return bad("trigger threshold and dwell must be non-negative".into());
            }
        }
        self.network(&self.references, &self.loads)
            .map(|_| ())
            .map_err(|e| SimError::InvalidScenario(e.to_string()))
    }

    /// Steady-state view at the given references and loads.
    pub fn network(&self, references: &[f64], loads: &[f64]) -> Result<SteadyStateNetwork, RedistributionError> {
        SteadyStateNetwork::new(
            self.graph.clone(),
            self.conductance.clone(),
            self.converters.iter().map(|c| c.resistance).collect(),
            self.converters.iter().map(|c| c.input_voltage).collect(),
            references.to_vec(),
            loads.to_vec(),
            self.duty_bounds.iter().map(|b| b.0).collect(),
            self.duty_bounds.iter().map(|b| b.1).collect(),
        )
    }

    /// Loads after every scheduled step has been applied.
    pub fn final_loads(&self) -> Vec<f64> {
        let mut loads = self.loads.clone();
        for s in &self.schedule {
            loads[s.node] = s.load;
        }
        loads
    }

    pub fn availability(&self, loads: &[f64], duties: &[f64]) -> Availability {
        match self.secondary.availability {
            AvailabilityKind::Balance => availability_measure(loads, duties),
            AvailabilityKind::Uniform => Availability::uniform(self.node_count()),
        }
    }
}

pub type DofSearch = Result<GreedyOutcome<RedistributionSolution>, SearchError<RedistributionError>>;
pub type KStepsSearch = Result<KStepsOutcome<RedistributionSolution>, SearchError<RedistributionError>>;

/// Outcome of running the configured selector(s) on one network snapshot.
#[derive(Debug)]
pub struct Selection {
    pub overload: NodeId,
    pub dof: Option<DofSearch>,
    pub ksteps: Option<KStepsSearch>,
}

impl Selection {
    /// Solution to apply: the dof result when the dof search ran, otherwise the
    /// baseline's.
    pub fn applied(&self) -> Option<(&'static str, &RedistributionSolution)> {
        match (&self.dof, &self.ksteps) {
            (Some(Ok(o)), _) => Some(("dof", &o.solution)),
            (Some(Err(_)), _) => None,
            (None, Some(Ok(o))) => Some(("ksteps", &o.solution)),
            _ => None,
        }
    }
}

/// Runs the selector(s) for `overload` on a network snapshot.
pub fn select_cluster(
    scenario: &Scenario,
    network: SteadyStateNetwork,
    availability: &Availability,
    overload: NodeId,
    algorithm: Algorithm,
) -> Selection {
    let cfg = &scenario.secondary;
    let oracle = MicrogridOracle::new(network, cfg.cost);
    let g = &scenario.graph;
    let dof = matches!(algorithm, Algorithm::Dof | Algorithm::Both)
        .then(|| dof_greedy_cluster(g, overload, availability, &oracle, cfg.max_steps));
    let ksteps = matches!(algorithm, Algorithm::Ksteps | Algorithm::Both)
        .then(|| ksteps_greedy(g, overload, &oracle, cfg.max_k));
    Selection { overload, dof, ksteps }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    LoadStep {
        t: f64,
        node: NodeId,
        load: f64,
    },
    Trigger {
        t: f64,
        node: NodeId,
        duty: f64,
    },
    /// Scheduled re-optimization found no node outside its bounds.
    NoOverload {
        t: f64,
    },
    Cluster {
        t: f64,
        algorithm: &'static str,
        overload: NodeId,
        members: Vec<NodeId>,
        trace: Vec<TraceStep>,
        iterations: usize,
        feasible: bool,
        message: Option<String>,
    },
    Apply {
        t: f64,
        algorithm: &'static str,
        members: Vec<NodeId>,
        old_references: Vec<f64>,
        new_references: Vec<f64>,
        cost: f64,
        containment_residual: f64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::LoadStep { t, .. }
            | Event::Trigger { t, .. }
            | Event::NoOverload { t }
            | Event::Cluster { t, .. }
            | Event::Apply { t, .. } => *t,
        }
    }
}

/// Trajectories sampled on the integrator grid, sample-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub voltage: Vec<Vec<f64>>,
    pub current: Vec<Vec<f64>>,
    pub duty: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
    /// `xi_ab` per edge `(a, b)`, current into `a` from `b`.
    pub edge_flux: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationOutput {
    pub series: TimeSeries,
    pub events: Vec<Event>,
    /// References in force at the end of the run.
    pub final_references: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimAbort {
    pub error: SimError,
    pub partial: SimulationOutput,
}

/// Physical network plus primary loops, integrated with classical RK4.
#[derive(Debug, Clone)]
pub struct Simulator {
    graph: Graph,
    conductance: Vec<f64>,
    converters: Vec<ConverterParams>,
    gains: ControlGains,
    pub references: Vec<f64>,
    pub loads: Vec<f64>,
    state: Vec<NodeState>,
    step: f64,
    steps_taken: u64,
}

impl Simulator {
    /// Starts every node at the steady state of its references and loads.
    pub fn from_scenario(s: &Scenario) -> Result<Self, SimError> {
        s.validate()?;
        let mut sim = Self {
            graph: s.graph.clone(),
            conductance: s.conductance.clone(),
            converters: s.converters.clone(),
            gains: s.gains,
            references: s.references.clone(),
            loads: s.loads.clone(),
            state: Vec::new(),
            step: s.step,
            steps_taken: 0,
        };
        sim.state = sim.steady_state();
        Ok(sim)
    }

    /// Equilibrium of the closed loop at the current references and loads.
    pub fn steady_state(&self) -> Vec<NodeState> {
        let xi = self.node_flux(&self.references);
        (0..self.references.len())
            .map(|i| NodeState {
                voltage: self.references[i],
                current: self.loads[i] - xi[i],
                integral: 0.0,
            })
            .collect()
    }

    pub fn state(&self) -> &[NodeState] {
        &self.state
    }

    pub fn set_state(&mut self, state: Vec<NodeState>) {
        assert_eq!(state.len(), self.state.len());
        self.state = state;
    }

    pub fn time(&self) -> f64 {
        self.steps_taken as f64 * self.step
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    fn node_flux(&self, voltages: &[f64]) -> Vec<f64> {
        let mut xi = vec![0.0; voltages.len()];
        for (&(a, b), &g) in self.graph.edges().iter().zip(&self.conductance) {
            let f = g * (voltages[b] - voltages[a]);
            xi[a] += f;
            xi[b] -= f;
        }
        xi
    }

    pub fn edge_flux(&self) -> Vec<f64> {
        self.graph
            .edges()
            .iter()
            .zip(&self.conductance)
            .map(|(&(a, b), &g)| g * (self.state[b].voltage - self.state[a].voltage))
            .collect()
    }

    /// Duty cycles commanded at the current state.
    pub fn duties(&self) -> Vec<f64> {
        let v: Vec<f64> = self.state.iter().map(|s| s.voltage).collect();
        let xi = self.node_flux(&v);
        (0..self.state.len())
            .map(|i| {
                primary_control(
                    &self.converters[i],
                    &self.gains,
                    &self.state[i],
                    self.references[i],
                    xi[i],
                    self.loads[i],
                )
                .duty
            })
            .collect()
    }

    /// Time derivative of the whole closed-loop state.
    pub fn rates(&self, state: &[NodeState]) -> Vec<NodeState> {
        let v: Vec<f64> = state.iter().map(|s| s.voltage).collect();
        let xi = self.node_flux(&v);
        state
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let p = &self.converters[i];
                let act = primary_control(p, &self.gains, s, self.references[i], xi[i], self.loads[i]);
                let (dv, di) = derivative(p, s, act.duty, xi[i], self.loads[i]);
                NodeState {
                    voltage: dv,
                    current: di,
                    integral: if act.saturated {
                        0.0
                    } else {
                        self.references[i] - s.voltage
                    },
                }
            })
            .collect()
    }

    /// One classical fourth-order Runge–Kutta step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let h = self.step;
        let axpy = |base: &[NodeState], k: &[NodeState], a: f64| -> Vec<NodeState> {
            base.iter()
                .zip(k)
                .map(|(s, d)| NodeState {
                    voltage: s.voltage + a * d.voltage,
                    current: s.current + a * d.current,
                    integral: s.integral + a * d.integral,
                })
                .collect()
        };
        let x = &self.state;
        let k1 = self.rates(x);
        let k2 = self.rates(&axpy(x, &k1, h / 2.0));
        let k3 = self.rates(&axpy(x, &k2, h / 2.0));
        let k4 = self.rates(&axpy(x, &k3, h));
        let next: Vec<NodeState> = (0..x.len())
            .map(|i| {
                let comb = |f: fn(&NodeState) -> f64| {
                    f(&x[i]) + h / 6.0 * (f(&k1[i]) + 2.0 * f(&k2[i]) + 2.0 * f(&k3[i]) + f(&k4[i]))
                };
                NodeState {
                    voltage: comb(|s| s.voltage),
                    current: comb(|s| s.current),
                    integral: comb(|s| s.integral),
                }
            })
            .collect();
        self.steps_taken += 1;
        if let Some(node) = next.iter().position(|s| !s.is_finite()) {
            return Err(SimError::NonFinite { t: self.time(), node });
        }
        self.state = next;
        Ok(())
    }
}

fn record(series: &mut TimeSeries, sim: &Simulator, t: f64) {
    series.times.push(t);
    series.voltage.push(sim.state.iter().map(|s| s.voltage).collect());
    series.current.push(sim.state.iter().map(|s| s.current).collect());
    series.duty.push(sim.duties());
    series.load.push(sim.loads.clone());
    series.edge_flux.push(sim.edge_flux());
}

/// Per-node dwell tracking for the saturation-risk trigger.
struct RiskMonitor {
    steps_in_risk: Vec<u64>,
    latched: Vec<bool>,
}

impl RiskMonitor {
    fn new(n: usize) -> Self {
        Self {
            steps_in_risk: vec![0; n],
            latched: vec![false; n],
        }
    }

    /// Returns the lowest-id node whose risk has lasted `dwell_steps`.
    fn update(&mut self, in_risk: &[bool], dwell_steps: u64) -> Option<NodeId> {
        let mut fired = None;
        for (i, &risk) in in_risk.iter().enumerate() {
            if risk {
                self.steps_in_risk[i] += 1;
            } else {
                self.steps_in_risk[i] = 0;
                self.latched[i] = false;
            }
            if fired.is_none() && risk && !self.latched[i] && self.steps_in_risk[i] > dwell_steps {
                fired = Some(i);
            }
        }
        if let Some(i) = fired {
            self.latched[i] = true;
        }
        fired
    }
}

fn risk_band(bounds: (f64, f64), threshold: f64) -> (f64, f64) {
    (bounds.0.max(0.5 - threshold), bounds.1.min(0.5 + threshold))
}

/// Simulates the scenario, running the secondary layer whenever its trigger
/// fires. A failed cluster search is logged and the old references stay.
pub fn run_scenario(scenario: &Scenario) -> Result<SimulationOutput, SimAbort> {
    let mut sim = Simulator::from_scenario(scenario).map_err(|error| SimAbort {
        error,
        partial: SimulationOutput::default(),
    })?;
    let n = scenario.node_count();
    let h = scenario.step;
    let total_steps = (scenario.horizon / h).round() as u64;
    let mut out = SimulationOutput::default();
    let mut next_load = 0;
    let mut monitor = RiskMonitor::new(n);
    let mut scheduled: Vec<f64> = match &scenario.secondary.policy {
        TriggerPolicy::Scheduled { times } => times.iter().rev().copied().collect(),
        _ => Vec::new(),
    };

    for k in 0..=total_steps {
        let t = k as f64 * h;
        while next_load < scenario.schedule.len() && scenario.schedule[next_load].time <= t + 1e-9 * h {
            let s = scenario.schedule[next_load];
            sim.loads[s.node] = s.load;
            out.events.push(Event::LoadStep {
                t,
                node: s.node,
                load: s.load,
            });
            next_load += 1;
        }
        record(&mut out.series, &sim, t);
        let duties = out.series.duty.last().expect("just recorded").clone();

        let overload = match &scenario.secondary.policy {
            TriggerPolicy::SaturationRisk { threshold, dwell } => {
                let in_risk: Vec<bool> = (0..n)
                    .map(|i| {
                        let (lo, hi) = risk_band(scenario.duty_bounds[i], *threshold);
                        duties[i] < lo || duties[i] > hi
                    })
                    .collect();
                let dwell_steps = (dwell / h - 1e-9).ceil().max(0.0) as u64;
                monitor.update(&in_risk, dwell_steps)
            }
            TriggerPolicy::Scheduled { .. } => {
                if scheduled.last().is_some_and(|&ts| ts <= t + 1e-9 * h) {
                    scheduled.pop();
                    let worst = (0..n)
                        .map(|i| {
                            let (lo, hi) = scenario.duty_bounds[i];
                            (i, (duties[i] - hi).max(lo - duties[i]))
                        })
                        .filter(|&(_, v)| v > 0.0)
                        .fold(None, |best: Option<(usize, f64)>, c| match best {
                            Some(b) if b.1 >= c.1 => Some(b),
                            _ => Some(c),
                        });
                    if worst.is_none() {
                        out.events.push(Event::NoOverload { t });
                    }
                    worst.map(|w| w.0)
                } else {
                    None
                }
            }
        };

        if let Some(node) = overload {
            out.events.push(Event::Trigger {
                t,
                node,
                duty: duties[node],
            });
            secondary_event(scenario, &mut sim, &duties, node, t, &mut out.events);
        }

        if k == total_steps {
            break;
        }
        if let Err(error) = sim.step() {
            out.final_references = sim.references.clone();
            return Err(SimAbort { error, partial: out });
        }
    }
    out.final_references = sim.references.clone();
    Ok(out)
}

fn secondary_event(
    scenario: &Scenario,
    sim: &mut Simulator,
    duties: &[f64],
    overload: NodeId,
    t: f64,
    events: &mut Vec<Event>,
) {
    let network = match scenario.network(&sim.references, &sim.loads) {
        Ok(net) => net,
        Err(e) => {
            events.push(Event::Cluster {
                t,
                algorithm: "dof",
                overload,
                members: vec![overload],
                trace: Vec::new(),
                iterations: 0,
                feasible: false,
                message: Some(e.to_string()),
            });
            return;
        }
    };
    let availability = scenario.availability(&sim.loads, duties);
    let selection = select_cluster(scenario, network, &availability, overload, scenario.secondary.algorithm);
    events.extend(cluster_events(&selection, t));
    if let Some((algorithm, solution)) = selection.applied() {
        let old: Vec<f64> = solution.cluster.iter().map(|&v| sim.references[v]).collect();
        let new: Vec<f64> = solution.cluster.iter().map(|&v| solution.references[v]).collect();
        sim.references.clone_from(&solution.references);
        events.push(Event::Apply {
            t,
            algorithm,
            members: solution.cluster.clone(),
            old_references: old,
            new_references: new,
            cost: solution.cost,
            containment_residual: solution.containment_residual,
        });
    }
}

/// Log records describing a selection.
pub fn cluster_events(selection: &Selection, t: f64) -> Vec<Event> {
    let mut events = Vec::new();
    let overload = selection.overload;
    if let Some(dof) = &selection.dof {
        events.push(match dof {
            Ok(o) => Event::Cluster {
                t,
                algorithm: "dof",
                overload,
                members: o.cluster.members().to_vec(),
                iterations: o.trace.len(),
                trace: o.trace.clone(),
                feasible: true,
                message: o.feasible_before_growth.then(|| "feasible before growth".to_string()),
            },
            Err(e) => Event::Cluster {
                t,
                algorithm: "dof",
                overload,
                members: match e {
                    SearchError::Exhausted { last_cluster, .. } => last_cluster.members().to_vec(),
                    _ => vec![overload],
                },
                iterations: e.trace().len(),
                trace: e.trace().to_vec(),
                feasible: false,
                message: Some(e.to_string()),
            },
        });
    }
    if let Some(ks) = &selection.ksteps {
        events.push(match ks {
            Ok(o) => Event::Cluster {
                t,
                algorithm: "ksteps",
                overload,
                members: o.cluster.members().to_vec(),
                trace: Vec::new(),
                iterations: o.iterations,
                feasible: true,
                message: None,
            },
            Err(e) => Event::Cluster {
                t,
                algorithm: "ksteps",
                overload,
                members: match e {
                    SearchError::Exhausted { last_cluster, .. } => last_cluster.members().to_vec(),
                    _ => vec![overload],
                },
                trace: Vec::new(),
                iterations: 0,
                feasible: false,
                message: Some(e.to_string()),
            },
        });
    }
    events
}
