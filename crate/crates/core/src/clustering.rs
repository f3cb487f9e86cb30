//! Greedy cluster growth around an overloading node.
//!
//! Two selectors are provided. [`dof_greedy_cluster`] adds one frontier node
//! per step, preferring nodes that raise the cluster dof (ranked by an
//! availability score) and otherwise the highest-degree frontier node.
//! [`ksteps_greedy`] is the reachability baseline: the ball of radius `k`
//! around the overloading node for `k = 1, 2, ...`. Both stop as soon as a
//! feasibility oracle accepts the cluster.

use std::collections::BTreeSet;
use std::convert::Infallible;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dof::{self, DofError};
use crate::graph::{Cluster, Graph, GraphError, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusteringError {
    #[error("graph is not connected")]
    GraphDisconnected,
    #[error("node {node} outside 0..{n}")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("frontier is empty; the cluster already spans the graph")]
    EmptyFrontier,
    #[error("availability has {got} scores for {expected} nodes")]
    AvailabilityLength { got: usize, expected: usize },
    #[error("availability score of node {0} is not finite")]
    NonFiniteAvailability(NodeId),
    #[error(transparent)]
    Dof(#[from] DofError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Per-node availability scores, higher meaning more spare control capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Availability {
    scores: Vec<f64>,
}

impl Availability {
    pub fn new(scores: Vec<f64>) -> Result<Self, ClusteringError> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ClusteringError::NonFiniteAvailability(i));
        }
        Ok(Self { scores })
    }

    pub fn uniform(n: usize) -> Self {
        Self { scores: vec![1.0; n] }
    }

    pub fn score(&self, i: NodeId) -> f64 {
        self.scores[i]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    fn check(&self, g: &Graph) -> Result<(), ClusteringError> {
        if self.scores.len() != g.node_count() {
            return Err(ClusteringError::AvailabilityLength {
                got: self.scores.len(),
                expected: g.node_count(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthRule {
    /// Availability argmax over the dof-increasing candidates.
    DofIncrease,
    /// Degree argmax over the whole frontier (no candidate raised the dof).
    MaxDegree,
}

impl fmt::Display for GrowthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthRule::DofIncrease => "dof-increase",
            GrowthRule::MaxDegree => "max-degree",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub node: NodeId,
    pub rule: GrowthRule,
    pub dof_after: usize,
}

/// Cluster under construction together with its open frontier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationState {
    cluster: Cluster,
    frontier: BTreeSet<NodeId>,
    current_dof: usize,
    trace: Vec<TraceStep>,
}

impl ExplorationState {
    /// `C = {overload}`, frontier = its neighbors, dof 0.
    pub fn new(g: &Graph, overload: NodeId) -> Result<Self, ClusteringError> {
        if overload >= g.node_count() {
            return Err(ClusteringError::NodeOutOfRange {
                node: overload,
                n: g.node_count(),
            });
        }
        Ok(Self {
            cluster: Cluster::singleton(overload),
            frontier: g.neighbors(overload).iter().copied().collect(),
            current_dof: 0,
            trace: Vec::new(),
        })
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn frontier(&self) -> &BTreeSet<NodeId> {
        &self.frontier
    }

    pub fn current_dof(&self) -> usize {
        self.current_dof
    }

    pub fn trace(&self) -> &[TraceStep] {
        &self.trace
    }

    /// Adds one node in place. On error the state is left untouched.
    pub fn grow(&mut self, g: &Graph, availability: &Availability) -> Result<TraceStep, ClusteringError> {
        availability.check(g)?;
        if self.frontier.is_empty() {
            return Err(ClusteringError::EmptyFrontier);
        }
        let candidates = candidate_set(g, self)?;
        let (node, rule) = if candidates.is_empty() {
            (
                argmax_by(self.frontier.iter().copied(), |j| g.degree(j) as f64),
                GrowthRule::MaxDegree,
            )
        } else {
            (
                argmax_by(candidates.iter().copied(), |j| availability.score(j)),
                GrowthRule::DofIncrease,
            )
        };
        let cluster = self.cluster.with(node)?;
        let current_dof = dof_of(g, &cluster)?;

        // N_C <- (N_C ∪ N_j) \ ({j} ∪ (C ∩ N_j))
        let mut frontier = self.frontier.clone();
        frontier.extend(g.neighbors(node).iter().copied());
        frontier.remove(&node);
        for &w in g.neighbors(node) {
            if cluster.contains(w) {
                frontier.remove(&w);
            }
        }

        let step = TraceStep {
            step: self.trace.len() + 1,
            node,
            rule,
            dof_after: current_dof,
        };
        self.cluster = cluster;
        self.frontier = frontier;
        self.current_dof = current_dof;
        self.trace.push(step);
        Ok(step)
    }
}

/// First maximizer in iteration order; callers iterate ascending so ties go
/// to the lowest id.
fn argmax_by(items: impl Iterator<Item = NodeId>, key: impl Fn(NodeId) -> f64) -> NodeId {
    let mut best: Option<(NodeId, f64)> = None;
    for j in items {
        let k = key(j);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((j, k));
        }
    }
    best.map(|(j, _)| j).expect("argmax over empty set")
}

/// Dof of a connected cluster; a cluster covering every node has no bridge and
/// is assigned `rank(L)`.
fn dof_of(g: &Graph, c: &Cluster) -> Result<usize, ClusteringError> {
    if c.len() == g.node_count() {
        return Ok(dof::exact_rank(&g.laplacian()));
    }
    Ok(dof::cluster_dof_connected(g, c)?.dof)
}

/// Frontier nodes whose addition strictly raises the dof. Candidates that
/// would complete the whole node set are never included.
pub fn candidate_set(g: &Graph, state: &ExplorationState) -> Result<BTreeSet<NodeId>, ClusteringError> {
    let frontier: Vec<NodeId> = state.frontier.iter().copied().collect();
    let n = g.node_count();
    let current = state.current_dof;
    let verdicts = crate::par::map(&frontier, |&j| -> Result<bool, ClusteringError> {
        if state.cluster.len() + 1 == n {
            return Ok(false);
        }
        let grown = state.cluster.with(j)?;
        Ok(dof::cluster_dof_connected(g, &grown)?.dof > current)
    });
    let mut h = BTreeSet::new();
    for (j, v) in frontier.into_iter().zip(verdicts) {
        if v? {
            h.insert(j);
        }
    }
    Ok(h)
}

/// Returns the state after one growth step; the input is not modified.
pub fn grow_step(
    g: &Graph,
    state: &ExplorationState,
    availability: &Availability,
) -> Result<ExplorationState, ClusteringError> {
    let mut next = state.clone();
    next.grow(g, availability)?;
    Ok(next)
}

pub enum Verdict<S> {
    Feasible(S),
    Infeasible,
}

/// Decides whether a cluster can absorb the disturbance, returning the new
/// references when it can. Must be deterministic for a fixed network state.
pub trait FeasibilityOracle {
    type Solution;
    type Error;

    fn evaluate(&self, cluster: &Cluster) -> Result<Verdict<Self::Solution>, Self::Error>;
}

impl<S, F> FeasibilityOracle for F
where
    F: Fn(&Cluster) -> Option<S>,
{
    type Solution = S;
    type Error = Infallible;

    fn evaluate(&self, cluster: &Cluster) -> Result<Verdict<S>, Infallible> {
        Ok(match self(cluster) {
            Some(s) => Verdict::Feasible(s),
            None => Verdict::Infeasible,
        })
    }
}

#[derive(Debug, Error)]
pub enum SearchError<E> {
    #[error("no feasible cluster within the step budget (last cluster size {})", .last_cluster.len())]
    Exhausted {
        last_cluster: Cluster,
        trace: Vec<TraceStep>,
    },
    #[error("feasibility oracle failed: {error}")]
    Oracle { error: E, trace: Vec<TraceStep> },
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}

impl<E> SearchError<E> {
    pub fn trace(&self) -> &[TraceStep] {
        match self {
            SearchError::Exhausted { trace, .. } | SearchError::Oracle { trace, .. } => trace,
            SearchError::Clustering(_) => &[],
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome<S> {
    pub cluster: Cluster,
    pub solution: S,
    pub trace: Vec<TraceStep>,
    /// The overloading node alone was already feasible; no growth happened.
    pub feasible_before_growth: bool,
}

/// Dof-based greedy cluster detection. The oracle is consulted on the initial
/// singleton and after every growth step; `max_steps` defaults to `n - 1`.
pub fn dof_greedy_cluster<O: FeasibilityOracle>(
    g: &Graph,
    overload: NodeId,
    availability: &Availability,
    oracle: &O,
    max_steps: Option<usize>,
) -> Result<GreedyOutcome<O::Solution>, SearchError<O::Error>> {
    if !g.is_connected() {
        return Err(ClusteringError::GraphDisconnected.into());
    }
    availability.check(g)?;
    let mut state = ExplorationState::new(g, overload)?;
    let max_steps = max_steps.unwrap_or(g.node_count().saturating_sub(1));
    loop {
        match oracle.evaluate(&state.cluster) {
            Ok(Verdict::Feasible(solution)) => {
                return Ok(GreedyOutcome {
                    feasible_before_growth: state.trace.is_empty(),
                    cluster: state.cluster,
                    solution,
                    trace: state.trace,
                })
            }
            Ok(Verdict::Infeasible) => {}
            Err(error) => {
                return Err(SearchError::Oracle {
                    error,
                    trace: state.trace,
                })
            }
        }
        if state.trace.len() >= max_steps || state.frontier.is_empty() {
            return Err(SearchError::Exhausted {
                last_cluster: state.cluster,
                trace: state.trace,
            });
        }
        state.grow(g, availability)?;
    }
}

/// Nodes within graph distance `k` of `overload`, ascending id.
pub fn ksteps_cluster(g: &Graph, overload: NodeId, k: usize) -> Result<Cluster, ClusteringError> {
    if overload >= g.node_count() {
        return Err(ClusteringError::NodeOutOfRange {
            node: overload,
            n: g.node_count(),
        });
    }
    let members = g
        .bfs_distances(overload)
        .into_iter()
        .enumerate()
        .filter(|(_, d)| d.is_some_and(|d| d <= k))
        .map(|(v, _)| v)
        .collect();
    Ok(Cluster::new(members)?)
}

#[derive(Debug, Clone)]
pub struct KStepsOutcome<S> {
    pub cluster: Cluster,
    pub solution: S,
    /// Radius at which the oracle first accepted.
    pub iterations: usize,
}

/// Reachability-set baseline: `k = 1..=max_k` until the oracle accepts.
pub fn ksteps_greedy<O: FeasibilityOracle>(
    g: &Graph,
    overload: NodeId,
    oracle: &O,
    max_k: usize,
) -> Result<KStepsOutcome<O::Solution>, SearchError<O::Error>> {
    if !g.is_connected() {
        return Err(ClusteringError::GraphDisconnected.into());
    }
    let mut last = Cluster::singleton(overload);
    for k in 1..=max_k {
        let cluster = ksteps_cluster(g, overload, k)?;
        match oracle.evaluate(&cluster) {
            Ok(Verdict::Feasible(solution)) => {
                return Ok(KStepsOutcome {
                    cluster,
                    solution,
                    iterations: k,
                })
            }
            Ok(Verdict::Infeasible) => last = cluster,
            Err(error) => {
                return Err(SearchError::Oracle {
                    error,
                    trace: Vec::new(),
                })
            }
        }
    }
    Err(SearchError::Exhausted {
        last_cluster: last,
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::example_graph;

    fn pendant_k6() -> Graph {
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in (i + 1)..6 {
                edges.push((i, j));
            }
            edges.push((i, 6 + i));
        }
        Graph::new(12, &edges).unwrap()
    }

    /// Star centered at 0 with leaves 1..=3, each leaf carrying a pendant 4..=6.
    fn decorated_star() -> Graph {
        Graph::new(7, &[(0, 1), (0, 2), (0, 3), (1, 4), (2, 5), (3, 6)]).unwrap()
    }

    fn state_with(g: &Graph, members: &[usize], dof: usize) -> ExplorationState {
        let cluster = Cluster::new(members.to_vec()).unwrap();
        let mut frontier = BTreeSet::new();
        for &v in members {
            frontier.extend(g.neighbors(v).iter().copied().filter(|w| !cluster.contains(*w)));
        }
        ExplorationState {
            cluster,
            frontier,
            current_dof: dof,
            trace: Vec::new(),
        }
    }

    #[test]
    fn candidates_on_example_graph() {
        let g = example_graph();
        let s = ExplorationState::new(&g, 4).unwrap();
        assert_eq!(s.frontier().iter().copied().collect::<Vec<_>>(), vec![3]);
        assert_eq!(candidate_set(&g, &s).unwrap(), BTreeSet::from([3]));
    }

    #[test]
    fn candidates_on_pendant_clique() {
        let g = pendant_k6();
        let s = state_with(&g, &[0, 1, 2, 3, 4, 5], 0);
        assert_eq!(s.frontier().len(), 6);
        assert_eq!(candidate_set(&g, &s).unwrap(), (6..12).collect());
    }

    #[test]
    fn no_candidates_around_decorated_star() {
        let g = decorated_star();
        let s = ExplorationState::new(&g, 0).unwrap();
        assert!(candidate_set(&g, &s).unwrap().is_empty());
        // Equal degrees: lowest id wins the fallback.
        let next = grow_step(&g, &s, &Availability::uniform(7)).unwrap();
        assert_eq!(next.trace()[0].node, 1);
        assert_eq!(next.trace()[0].rule, GrowthRule::MaxDegree);
        assert_eq!(s.trace().len(), 0, "input state untouched");
    }

    #[test]
    fn first_step_on_example_graph() {
        let g = example_graph();
        let s = ExplorationState::new(&g, 0).unwrap();
        let next = grow_step(&g, &s, &Availability::uniform(6)).unwrap();
        assert_eq!(next.cluster().members(), &[0, 1]);
        assert_eq!(next.current_dof(), 1);
        assert_eq!(next.trace()[0].rule, GrowthRule::DofIncrease);
        assert_eq!(next.frontier().iter().copied().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn availability_ties_break_to_lowest_id() {
        let g = pendant_k6();
        let s = state_with(&g, &[0, 1, 2, 3, 4, 5], 0);
        let next = grow_step(&g, &s, &Availability::uniform(12)).unwrap();
        assert_eq!(next.trace()[0].node, 6);
        let mut scores = vec![0.0; 12];
        scores[9] = 2.0;
        scores[10] = 2.0;
        let next = grow_step(&g, &s, &Availability::new(scores).unwrap()).unwrap();
        assert_eq!(next.trace()[0].node, 9);
    }

    #[test]
    fn empty_frontier_is_an_error() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let mut s = ExplorationState::new(&g, 0).unwrap();
        s.grow(&g, &Availability::uniform(2)).unwrap();
        assert_eq!(
            s.grow(&g, &Availability::uniform(2)),
            Err(ClusteringError::EmptyFrontier)
        );
    }

    #[test]
    fn always_feasible_oracle_returns_singleton() {
        let g = example_graph();
        let out = dof_greedy_cluster(&g, 2, &Availability::uniform(6), &|_: &Cluster| Some(()), None).unwrap();
        assert_eq!(out.cluster.members(), &[2]);
        assert!(out.trace.is_empty());
        assert!(out.feasible_before_growth);
    }

    #[test]
    fn never_feasible_oracle_exhausts_whole_graph() {
        let g = example_graph();
        let never = |_: &Cluster| -> Option<()> { None };
        let err = dof_greedy_cluster(&g, 0, &Availability::uniform(6), &never, Some(5)).unwrap_err();
        match err {
            SearchError::Exhausted { last_cluster, trace } => {
                assert_eq!(last_cluster.sorted(), vec![0, 1, 2, 3, 4, 5]);
                assert_eq!(trace.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn size_threshold_oracle() {
        let g = example_graph();
        let needs_three = |c: &Cluster| (c.len() >= 3).then(|| c.len());
        let out = dof_greedy_cluster(&g, 0, &Availability::uniform(6), &needs_three, None).unwrap();
        assert_eq!(out.cluster.len(), 3);
        assert_eq!(out.trace.len(), 2);
        assert!(!out.feasible_before_growth);
    }

    #[test]
    fn ksteps_balls() {
        let g = example_graph();
        assert_eq!(ksteps_cluster(&g, 0, 1).unwrap().members(), &[0, 1]);
        assert_eq!(ksteps_cluster(&g, 0, 2).unwrap().members(), &[0, 1, 2, 3]);
        assert_eq!(ksteps_cluster(&g, 0, 10).unwrap().len(), 6);
    }

    #[test]
    fn ksteps_iterations() {
        let g = example_graph();
        let out = ksteps_greedy(&g, 0, &|_: &Cluster| Some(()), 3).unwrap();
        assert_eq!(out.iterations, 1);

        let path = Graph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let needs = |m: usize| move |c: &Cluster| (c.len() >= m).then_some(());
        for m in 2..=6 {
            let out = ksteps_greedy(&path, 0, &needs(m), 10).unwrap();
            assert_eq!(out.iterations, m - 1);
        }
        assert!(matches!(
            ksteps_greedy(&path, 0, &needs(7), 10),
            Err(SearchError::Exhausted { .. })
        ));
    }
}
