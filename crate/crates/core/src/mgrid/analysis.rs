//! Post-run checks of how far a disturbance spread past the chosen cluster.

use super::{Event, Scenario, SimulationOutput};
use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentReport {
    pub overload: NodeId,
    pub cluster: Vec<NodeId>,
    pub disturbance_time: f64,
    pub apply_time: f64,
    /// Start of the window the deviations are measured over.
    pub settle_from: f64,
    /// Largest `|V_k(t) - V_k(pre)|` over external nodes and the window.
    pub max_external_voltage_deviation: f64,
    pub worst_external_node: Option<NodeId>,
    /// Same for line currents on edges with an external endpoint.
    pub max_external_flux_deviation: f64,
    /// Largest `|V_o(t) - V_o^ref(pre)|` of the overloaded node over the window.
    pub overload_voltage_error: f64,
    /// `(node, new - old)` reference change per cluster member.
    pub reference_shifts: Vec<(NodeId, f64)>,
}

/// Measures containment of the first applied redistribution. Pre-event
/// values come from the sample just before the load step that preceded it;
/// deviations are taken from `settle` seconds after the redistribution to
/// the end of the run.
pub fn containment_report(scenario: &Scenario, out: &SimulationOutput, settle: f64) -> Option<ContainmentReport> {
    let (apply_time, members, old, new) = out.events.iter().find_map(|e| match e {
        Event::Apply {
            t,
            members,
            old_references,
            new_references,
            ..
        } => Some((*t, members.clone(), old_references.clone(), new_references.clone())),
        _ => None,
    })?;
    let overload = out.events.iter().rev().find_map(|e| match e {
        Event::Trigger { t, node, .. } if *t <= apply_time => Some(*node),
        _ => None,
    })?;
    let disturbance_time = out
        .events
        .iter()
        .rev()
        .find_map(|e| match e {
            Event::LoadStep { t, .. } if *t <= apply_time => Some(*t),
            _ => None,
        })
        .unwrap_or(0.0);

    let series = &out.series;
    let pre = series.times.iter().rposition(|&t| t < disturbance_time).unwrap_or(0);
    let settle_from = apply_time + settle;
    let window: Vec<usize> = (0..series.len())
        .filter(|&k| series.times[k] >= settle_from - 1e-12)
        .collect();

    let inside = |v: NodeId| members.binary_search(&v).is_ok();
    let mut max_v = 0.0;
    let mut worst = None;
    for v in (0..scenario.node_count()).filter(|&v| !inside(v)) {
        for &k in &window {
            let dev = (series.voltage[k][v] - series.voltage[pre][v]).abs();
            if worst.is_none() || dev > max_v {
                max_v = dev;
                worst = Some(v);
            }
        }
    }
    let mut max_f: f64 = 0.0;
    for (e, &(a, b)) in scenario.graph.edges().iter().enumerate() {
        if inside(a) && inside(b) {
            continue;
        }
        for &k in &window {
            max_f = max_f.max((series.edge_flux[k][e] - series.edge_flux[pre][e]).abs());
        }
    }
    let pos = members.iter().position(|&v| v == overload);
    let ref_pre = pos.map_or(scenario.references[overload], |p| old[p]);
    let overload_voltage_error = window
        .iter()
        .map(|&k| (series.voltage[k][overload] - ref_pre).abs())
        .fold(0.0, f64::max);

    Some(ContainmentReport {
        overload,
        reference_shifts: members.iter().enumerate().map(|(p, &v)| (v, new[p] - old[p])).collect(),
        cluster: members,
        disturbance_time,
        apply_time,
        settle_from,
        max_external_voltage_deviation: max_v,
        worst_external_node: worst,
        max_external_flux_deviation: max_f,
        overload_voltage_error,
    })
}
