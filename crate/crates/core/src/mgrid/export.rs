//! CSV and JSON-lines writers for simulation output. Nodes are written by
//! label.

use std::io::{self, Write};

use serde_json::{json, Value};

use super::{Event, TimeSeries};
use crate::graph::{Graph, NodeId};

/// `t,node,V,I,u,d`, one row per sample and node.
pub fn write_timeseries_csv<W: Write>(mut w: W, series: &TimeSeries, labels: &[String]) -> io::Result<()> {
    writeln!(w, "t,node,V,I,u,d")?;
    for (k, t) in series.times.iter().enumerate() {
        for (i, label) in labels.iter().enumerate() {
            writeln!(
                w,
                "{t},{label},{},{},{},{}",
                series.voltage[k][i], series.current[k][i], series.duty[k][i], series.load[k][i]
            )?;
        }
    }
    Ok(())
}

/// `t,edge,xi` with edges written `a-b`; `xi` is the current into `a`.
pub fn write_flux_csv<W: Write>(mut w: W, series: &TimeSeries, graph: &Graph, labels: &[String]) -> io::Result<()> {
    writeln!(w, "t,edge,xi")?;
    let names: Vec<String> = graph
        .edges()
        .iter()
        .map(|&(a, b)| format!("{}-{}", labels[a], labels[b]))
        .collect();
    for (k, t) in series.times.iter().enumerate() {
        for (e, name) in names.iter().enumerate() {
            writeln!(w, "{t},{name},{}", series.edge_flux[k][e])?;
        }
    }
    Ok(())
}

/// `id,label` map used by every output file.
pub fn write_labels<W: Write>(mut w: W, labels: &[String]) -> io::Result<()> {
    writeln!(w, "id,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    Ok(())
}

pub fn event_record(event: &Event, labels: &[String]) -> Value {
    let name = |v: NodeId| labels[v].clone();
    let names = |vs: &[NodeId]| vs.iter().map(|&v| name(v)).collect::<Vec<_>>();
    match event {
        Event::LoadStep { t, node, load } => json!({"kind": "load_step", "t": t, "node": name(*node), "load": load}),
        Event::Trigger { t, node, duty } => json!({"kind": "trigger", "t": t, "node": name(*node), "duty": duty}),
        Event::NoOverload { t } => json!({"kind": "no_overload", "t": t}),
        Event::Cluster {
            t,
            algorithm,
            overload,
            members,
            trace,
            iterations,
            feasible,
            message,
        } => json!({
            "kind": "cluster",
            "t": t,
            "algorithm": algorithm,
            "overload": name(*overload),
            "members": names(members),
            "size": members.len(),
            "trace": trace.iter().map(|s| json!({
                "step": s.step,
                "node": name(s.node),
                "rule": s.rule.to_string(),
                "dof_after": s.dof_after,
            })).collect::<Vec<_>>(),
            "iterations": iterations,
            "feasible": feasible,
            "message": message,
        }),
        Event::Apply {
            t,
            algorithm,
            members,
            old_references,
            new_references,
            cost,
            containment_residual,
        } => json!({
            "kind": "apply",
            "t": t,
            "algorithm": algorithm,
            "members": names(members),
            "old_references": old_references,
            "new_references": new_references,
            "cost": cost,
            "containment_residual": containment_residual,
        }),
    }
}

/// One JSON object per line.
pub fn write_event_log<W: Write>(mut w: W, events: &[Event], labels: &[String]) -> io::Result<()> {
    for e in events {
        writeln!(w, "{}", event_record(e, labels))?;
    }
    Ok(())
}
