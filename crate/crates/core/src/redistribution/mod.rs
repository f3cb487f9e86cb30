//! Local reference re-optimization for resistive DC networks.
//!
//! At steady state every node sits at its voltage reference and the line
//! currents `xi_ij = G_ij (V_j - V_i)` are fixed by the references alone. A
//! cluster may shift its own references by `dV` as long as the net current
//! injected into every external neighbor is unchanged:
//!
//! ```text
//!     sum_{i in C, i ~ k} G_ki dV_i = 0     for every external k adjacent to C
//! ```
//!
//! These equalities are eliminated exactly by restricting `dV` to their null
//! space. On unit conductances the null-space dimension is the cluster dof.
//! The duty-cycle boxes then become general linear inequalities in the
//! reduced coordinates and are handled by the dual active-set solver in
//! [`qp`].

pub mod qp;

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{FeasibilityOracle, Verdict};
use crate::graph::{Cluster, Graph, GraphError, NodeId};
use qp::{QpError, QpOutcome};

/// Bound tolerance on duty cycles and containment residual tolerance (A).
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RedistributionError {
    #[error("{field} has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("conductance of edge {edge} must be positive and finite, got {value}")]
    Conductance { edge: usize, value: f64 },
    #[error("node {node}: {what}")]
    NodeParameter { node: NodeId, what: String },
    #[error("cluster does not induce a connected subgraph")]
    ClusterDisconnected,
    #[error("cost is not strictly convex: {0}")]
    NonConvexCost(String),
    #[error("solver hit its iteration limit ({0})")]
    IterationLimit(usize),
    #[error("solver failed: {0}")]
    Numerical(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Steady-state description of a resistive DC network with averaged
/// converters at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateNetwork {
    graph: Graph,
    /// Siemens, indexed like `graph.edges()`.
    conductance: Vec<f64>,
    /// Converter series resistance (ohm).
    resistance: Vec<f64>,
    /// Converter input voltage (V).
    input_voltage: Vec<f64>,
    /// Voltage references (V).
    pub references: Vec<f64>,
    /// Load currents (A).
    pub loads: Vec<f64>,
    u_min: Vec<f64>,
    u_max: Vec<f64>,
}

impl SteadyStateNetwork {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: Graph,
        conductance: Vec<f64>,
        resistance: Vec<f64>,
        input_voltage: Vec<f64>,
        references: Vec<f64>,
        loads: Vec<f64>,
        u_min: Vec<f64>,
        u_max: Vec<f64>,
    ) -> Result<Self, RedistributionError> {
        let n = graph.node_count();
        let check = |field, v: &Vec<f64>, expected| {
            if v.len() != expected {
                Err(RedistributionError::Length {
                    field,
                    got: v.len(),
                    expected,
                })
            } else {
                Ok(())
            }
        };
        check("conductance", &conductance, graph.edges().len())?;
        check("resistance", &resistance, n)?;
        check("input_voltage", &input_voltage, n)?;
        check("references", &references, n)?;
        check("loads", &loads, n)?;
        check("u_min", &u_min, n)?;
        check("u_max", &u_max, n)?;
        if let Some((edge, &value)) = conductance
            .iter()
            .enumerate()
            .find(|(_, g)| !(g.is_finite() && **g > 0.0))
        {
            return Err(RedistributionError::Conductance { edge, value });
        }
        for i in 0..n {
            let bad = |what: String| Err(RedistributionError::NodeParameter { node: i, what });
            if !(input_voltage[i].is_finite() && input_voltage[i] > 0.0) {
                return bad(format!("input voltage {} must be positive", input_voltage[i]));
            }
            if !(resistance[i].is_finite() && resistance[i] >= 0.0) {
                return bad(format!("resistance {} must be non-negative", resistance[i]));
            }
            if !(0.0 <= u_min[i] && u_min[i] < u_max[i] && u_max[i] <= 1.0) {
                return bad(format!(
                    "duty bounds [{}, {}] must satisfy 0 <= min < max <= 1",
                    u_min[i], u_max[i]
                ));
            }
            if !(references[i].is_finite() && loads[i].is_finite()) {
                return bad("reference and load must be finite".into());
            }
        }
        Ok(Self {
            graph,
            conductance,
            resistance,
            input_voltage,
            references,
            loads,
            u_min,
            u_max,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }

    pub fn conductance_between(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.graph.edge_index(a, b).map(|e| self.conductance[e])
    }

    pub fn resistance(&self) -> &[f64] {
        &self.resistance
    }

    pub fn input_voltage(&self) -> &[f64] {
        &self.input_voltage
    }

    pub fn duty_bounds(&self, i: NodeId) -> (f64, f64) {
        (self.u_min[i], self.u_max[i])
    }

    /// Steady state with every node at the given voltages.
    pub fn steady_state_map(&self, voltages: &[f64]) -> SteadyState {
        let n = self.graph.node_count();
        let mut node_flux = vec![0.0; n];
        let edge_flux: Vec<f64> = self
            .graph
            .edges()
            .iter()
            .zip(&self.conductance)
            .map(|(&(a, b), &g)| {
                let xi_ab = g * (voltages[b] - voltages[a]);
                node_flux[a] += xi_ab;
                node_flux[b] -= xi_ab;
                xi_ab
            })
            .collect();
        let current: Vec<f64> = (0..n).map(|i| self.loads[i] - node_flux[i]).collect();
        let duty = (0..n)
            .map(|i| (voltages[i] + self.resistance[i] * current[i]) / self.input_voltage[i])
            .collect();
        SteadyState {
            edge_flux,
            node_flux,
            current,
            duty,
        }
    }

    /// Steady state at the current references.
    pub fn at_references(&self) -> SteadyState {
        self.steady_state_map(&self.references)
    }
}

/// Equilibrium quantities implied by a voltage profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// `xi_ab = G_ab (V_b - V_a)` for each edge `(a, b)`, `a < b`: current
    /// delivered into `a` by the line.
    pub edge_flux: Vec<f64>,
    /// Net current injected into each node by its lines.
    pub node_flux: Vec<f64>,
    /// Converter current `I_i = d_i - xi_i`.
    pub current: Vec<f64>,
    /// Duty cycle `u_i = (V_i + R_i I_i) / V_in,i`.
    pub duty: Vec<f64>,
}

/// Quadratic cost over the cluster's reference shifts.
///
/// `balance_weight * sum (u_i - balance_target)^2`
/// `+ loss_weight * sum_{lines touching C} G (V_a - V_b)^2`
/// `+ regularization * sum dV_i^2`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSpec {
    pub balance_weight: f64,
    pub balance_target: f64,
    pub loss_weight: f64,
    pub regularization: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            balance_weight: 1.0,
            balance_target: 0.5,
            loss_weight: 0.0,
            regularization: 1e-3,
        }
    }
}

impl CostSpec {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            balance_weight: self.balance_weight * factor,
            loss_weight: self.loss_weight * factor,
            regularization: self.regularization * factor,
            ..self
        }
    }

    fn validate(&self) -> Result<(), RedistributionError> {
        let finite = [
            self.balance_weight,
            self.balance_target,
            self.loss_weight,
            self.regularization,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(RedistributionError::NonConvexCost("non-finite coefficient".into()));
        }
        if self.balance_weight < 0.0 || self.loss_weight < 0.0 {
            return Err(RedistributionError::NonConvexCost("negative weight".into()));
        }
        if self.regularization <= 0.0 {
            return Err(RedistributionError::NonConvexCost(
                "regularization must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

/// Assembled local problem in the reduced (null-space) coordinates.
#[derive(Debug, Clone)]
pub struct RedistributionProblem {
    network: SteadyStateNetwork,
    cluster: Cluster,
    /// External nodes adjacent to the cluster, ascending; one containment row each.
    external_neighbors: Vec<NodeId>,
    /// Rows: external neighbors; columns: cluster members.
    containment: DMatrix<f64>,
    /// Orthonormal columns spanning the containment null space.
    null_basis: DMatrix<f64>,
    /// Duty cycles of cluster members at the current references.
    base_duty: DVector<f64>,
    /// `d u_C / d dV`.
    duty_jacobian: DMatrix<f64>,
    /// Cost `dV' P dV + q' dV + c0`.
    cost_quadratic: DMatrix<f64>,
    cost_linear: DVector<f64>,
    cost_constant: f64,
    cost: CostSpec,
}

/// Builds the local problem for `cluster`. A cluster covering the whole graph
/// is accepted and simply has no containment rows.
pub fn assemble_problem(
    net: &SteadyStateNetwork,
    cluster: &Cluster,
    cost: &CostSpec,
) -> Result<RedistributionProblem, RedistributionError> {
    cost.validate()?;
    let g = net.graph();
    if !g.cluster_is_connected(cluster)? {
        return Err(RedistributionError::ClusterDisconnected);
    }
    let members = cluster.members();
    let size = members.len();
    let local = |v: NodeId| members.iter().position(|&m| m == v);

    let external_neighbors: Vec<NodeId> = g
        .complement(cluster)
        .into_iter()
        .filter(|&k| g.neighbors(k).iter().any(|&w| cluster.contains(w)))
        .collect();
    let mut containment = DMatrix::zeros(external_neighbors.len(), size);
    for (row, &k) in external_neighbors.iter().enumerate() {
        for &w in g.neighbors(k) {
            if let Some(col) = local(w) {
                containment[(row, col)] = net.conductance_between(k, w).expect("edge exists");
            }
        }
    }
    let null_basis = null_space(&containment);

    let base = net.at_references();
    let base_duty = DVector::from_iterator(size, members.iter().map(|&i| base.duty[i]));
    let mut duty_jacobian = DMatrix::zeros(size, size);
    for (row, &i) in members.iter().enumerate() {
        let (r, vin) = (net.resistance[i], net.input_voltage[i]);
        let mut diag = 1.0;
        for &j in g.neighbors(i) {
            let gij = net.conductance_between(i, j).expect("edge exists");
            diag += r * gij;
            if let Some(col) = local(j) {
                duty_jacobian[(row, col)] -= r * gij / vin;
            }
        }
        duty_jacobian[(row, row)] += diag / vin;
    }

    // Quadratic cost in dV.
    let offset = base_duty.add_scalar(-cost.balance_target);
    let mut p = duty_jacobian.transpose() * &duty_jacobian * cost.balance_weight;
    let mut q = duty_jacobian.transpose() * &offset * (2.0 * cost.balance_weight);
    let mut c0 = offset.norm_squared() * cost.balance_weight;
    for d in 0..size {
        p[(d, d)] += cost.regularization;
    }
    if cost.loss_weight > 0.0 {
        for (e, &(a, b)) in g.edges().iter().enumerate() {
            let (la, lb) = (local(a), local(b));
            if la.is_none() && lb.is_none() {
                continue;
            }
            let w = cost.loss_weight * net.conductance[e];
            let gap = net.references[a] - net.references[b];
            let mut row = DVector::zeros(size);
            if let Some(la) = la {
                row[la] += 1.0;
            }
            if let Some(lb) = lb {
                row[lb] -= 1.0;
            }
            p += &row * row.transpose() * w;
            q += &row * (2.0 * w * gap);
            c0 += w * gap * gap;
        }
    }

    Ok(RedistributionProblem {
        network: net.clone(),
        cluster: cluster.clone(),
        external_neighbors,
        containment,
        null_basis,
        base_duty,
        duty_jacobian,
        cost_quadratic: p,
        cost_linear: q,
        cost_constant: c0,
        cost: *cost,
    })
}

/// Orthonormal basis of `{x : a x = 0}`.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // Pad to at least `cols` rows so the SVD returns a full right basis.
    let rows = a.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = svd.singular_values.max();
    let tol = rows.max(cols) as f64 * f64::EPSILON * sigma_max.max(1.0);
    let null: Vec<_> = (0..cols)
        .filter(|&k| svd.singular_values[k] <= tol)
        .map(|k| v_t.row(k).transpose())
        .collect();
    if null.is_empty() {
        DMatrix::zeros(cols, 0)
    } else {
        DMatrix::from_columns(&null)
    }
}

impl RedistributionProblem {
    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn network(&self) -> &SteadyStateNetwork {
        &self.network
    }

    /// No external nodes: the cluster covers the whole graph.
    pub fn spans_graph(&self) -> bool {
        self.cluster.len() == self.network.graph.node_count()
    }

    pub fn external_neighbors(&self) -> &[NodeId] {
        &self.external_neighbors
    }

    pub fn containment_matrix(&self) -> &DMatrix<f64> {
        &self.containment
    }

    /// Dimension of the containment null space.
    pub fn free_dimension(&self) -> usize {
        self.null_basis.ncols()
    }

    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null_basis
    }

    /// Number of independent containment equalities.
    pub fn containment_rank(&self) -> usize {
        self.cluster.len() - self.free_dimension()
    }

    /// Cluster duty cycles after shifting references by `delta` (cluster order).
    pub fn duty_after(&self, delta: &DVector<f64>) -> DVector<f64> {
        &self.base_duty + &self.duty_jacobian * delta
    }

    pub fn cost_at(&self, delta: &DVector<f64>) -> f64 {
        delta.dot(&(&self.cost_quadratic * delta)) + self.cost_linear.dot(delta) + self.cost_constant
    }

    /// Largest absolute change of net current into any external neighbor.
    pub fn containment_residual(&self, delta: &DVector<f64>) -> f64 {
        (&self.containment * delta).amax()
    }

    /// Renders variables, constraints and cost as plain text.
    pub fn render(&self, label: &dyn Fn(NodeId) -> String) -> String {
        let mut out = String::new();
        let members = self.cluster.members();
        let _ = writeln!(
            out,
            "problem cluster=[{}] free_dim={} containment_rank={} spans_graph={}",
            members.iter().map(|&v| label(v)).collect::<Vec<_>>().join(","),
            self.free_dimension(),
            self.containment_rank(),
            self.spans_graph()
        );
        for &v in members {
            let _ = writeln!(out, "variable dV[{}] ref={:.6}", label(v), self.network.references[v]);
        }
        for (row, &k) in self.external_neighbors.iter().enumerate() {
            let terms: Vec<String> = (0..members.len())
                .filter(|&c| self.containment[(row, c)] != 0.0)
                .map(|c| format!("{}*dV[{}]", self.containment[(row, c)], label(members[c])))
                .collect();
            let _ = writeln!(out, "containment ext={} {} = 0", label(k), terms.join(" + "));
        }
        for (row, &v) in members.iter().enumerate() {
            let (lo, hi) = self.network.duty_bounds(v);
            let _ = writeln!(
                out,
                "bound u[{}] {lo} <= {:.9} + grad.dV <= {hi}",
                label(v),
                self.base_duty[row]
            );
        }
        let _ = writeln!(
            out,
            "cost balance_weight={} balance_target={} loss_weight={} regularization={}",
            self.cost.balance_weight, self.cost.balance_target, self.cost.loss_weight, self.cost.regularization
        );
        out
    }
}

impl fmt::Display for RedistributionProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|v| v.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveBound {
    pub node: NodeId,
    pub side: BoundSide,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RedistributionSolution {
    pub status: SolveStatus,
    pub cluster: Vec<NodeId>,
    /// Reference shifts, cluster order. Zero when infeasible.
    pub delta: Vec<f64>,
    /// Full reference vector after the shift (unchanged when infeasible).
    pub references: Vec<f64>,
    /// Steady-state duty cycles of every node at `references`.
    pub duty: Vec<f64>,
    /// Steady-state line currents at `references`, indexed like graph edges.
    pub edge_flux: Vec<f64>,
    pub cost: f64,
    pub active: Vec<ActiveBound>,
    pub containment_residual: f64,
    pub iterations: usize,
}

impl RedistributionSolution {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }

    pub fn render(&self, label: &dyn Fn(NodeId) -> String) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "solution status={:?} cost={:.9} iterations={} containment_residual={:.3e}",
            self.status, self.cost, self.iterations, self.containment_residual
        );
        for (k, &v) in self.cluster.iter().enumerate() {
            let side = self
                .active
                .iter()
                .find(|a| a.node == v)
                .map(|a| format!(" active={:?}", a.side).to_lowercase())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "node {} ref={:.6} dV={:+.6} u={:.6}{side}",
                label(v),
                self.references[v],
                self.delta[k],
                self.duty[v]
            );
        }
        out
    }
}

/// Minimizes the cost over the containment null space subject to the duty
/// boxes. Infeasibility is a normal outcome, not an error.
pub fn solve(problem: &RedistributionProblem) -> Result<RedistributionSolution, RedistributionError> {
    let size = problem.cluster.len();
    let members = problem.cluster.members();
    let n_basis = &problem.null_basis;
    let dim = n_basis.ncols();
    let max_iter = 100 * size.max(1);

    // Reduced box rows: lo <= u0 + B z <= hi, with B = J N.
    let reduced = &problem.duty_jacobian * n_basis;
    let mut normals: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut origin: Vec<(NodeId, BoundSide)> = Vec::new();
    let mut infeasible_constant = false;
    for (row, &v) in members.iter().enumerate() {
        let (lo, hi) = problem.network.duty_bounds(v);
        let u0 = problem.base_duty[row];
        let b_row: DVector<f64> = reduced.row(row).transpose();
        if b_row.amax() <= 1e-14 {
            // Not steerable from the null space.
            if u0 < lo - BOUND_TOL || u0 > hi + BOUND_TOL {
                infeasible_constant = true;
            }
            continue;
        }
        normals.push(b_row.clone());
        rhs.push(lo - u0);
        origin.push((v, BoundSide::Lower));
        normals.push(-b_row);
        rhs.push(u0 - hi);
        origin.push((v, BoundSide::Upper));
    }

    let infeasible = |iterations| RedistributionSolution {
        status: SolveStatus::Infeasible,
        cluster: members.to_vec(),
        delta: vec![0.0; size],
        references: problem.network.references.clone(),
        duty: problem.network.at_references().duty,
        edge_flux: problem.network.at_references().edge_flux,
        cost: problem.cost_at(&DVector::zeros(size)),
        active: Vec::new(),
        containment_residual: 0.0,
        iterations,
    };
    if infeasible_constant {
        return Ok(infeasible(0));
    }

    let (z, active, iterations) = if dim == 0 {
        if rhs.iter().any(|&r| r > BOUND_TOL) {
            return Ok(infeasible(0));
        }
        (DVector::zeros(0), Vec::new(), 0)
    } else {
        let hessian = n_basis.transpose() * &problem.cost_quadratic * n_basis * 2.0;
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        let linear = n_basis.transpose() * &problem.cost_linear;
        let c = if normals.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(&normals)
        };
        let b = DVector::from_vec(rhs);
        match qp::solve_dual_active_set(&hessian, &linear, &c, &b, 1e-13, max_iter) {
            Ok(QpOutcome::Optimal(s)) => {
                let active = s.active.iter().map(|&(j, _)| j).collect::<Vec<_>>();
                (s.x, active, s.iterations)
            }
            Ok(QpOutcome::Infeasible { iterations, .. }) => return Ok(infeasible(iterations)),
            Err(QpError::IterationLimit(k)) => return Err(RedistributionError::IterationLimit(k)),
            Err(e) => return Err(RedistributionError::Numerical(e.to_string())),
        }
    };

    let delta = n_basis * &z;
    let mut references = problem.network.references.clone();
    for (k, &v) in members.iter().enumerate() {
        references[v] += delta[k];
    }
    let state = problem.network.steady_state_map(&references);
    let mut active: Vec<ActiveBound> = active
        .into_iter()
        .map(|j| ActiveBound {
            node: origin[j].0,
            side: origin[j].1,
        })
        .collect();
    active.sort_by_key(|a| a.node);
    Ok(RedistributionSolution {
        status: SolveStatus::Feasible,
        cluster: members.to_vec(),
        cost: problem.cost_at(&delta),
        containment_residual: problem.containment_residual(&delta),
        delta: delta.iter().copied().collect(),
        references,
        duty: state.duty,
        edge_flux: state.edge_flux,
        active,
        iterations,
    })
}

/// Binds a network snapshot and a cost so clusters can be tested for
/// feasibility inside the greedy searches.
#[derive(Debug, Clone)]
pub struct MicrogridOracle {
    pub network: SteadyStateNetwork,
    pub cost: CostSpec,
}

impl MicrogridOracle {
    pub fn new(network: SteadyStateNetwork, cost: CostSpec) -> Self {
        Self { network, cost }
    }
}

impl FeasibilityOracle for MicrogridOracle {
    type Solution = RedistributionSolution;
    type Error = RedistributionError;

    fn evaluate(&self, cluster: &Cluster) -> Result<Verdict<RedistributionSolution>, RedistributionError> {
        let problem = assemble_problem(&self.network, cluster, &self.cost)?;
        let solution = solve(&problem)?;
        Ok(if solution.is_feasible() {
            Verdict::Feasible(solution)
        } else {
            Verdict::Infeasible
        })
    }
}

#[cfg(test)]
mod tests;
