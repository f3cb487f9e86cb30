//! Undirected graphs, clusters and the Laplacian block structure a cluster induces.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::matrix::IntMatrix;

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({a}, {b}) references node outside 0..{n}")]
    NodeOutOfRange { a: NodeId, b: NodeId, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("cluster member {node} outside 0..{n}")]
    MemberOutOfRange { node: NodeId, n: usize },
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("cluster lists node {0} twice")]
    DuplicateMember(NodeId),
    #[error("cluster must be proper subset of the node set")]
    ClusterIsWholeGraph,
}

/// Simple undirected graph on nodes `0..n`.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Sorted, deduplicated, `a < b`.
    edges: Vec<(NodeId, NodeId)>,
    /// Sorted neighbor lists.
    adjacency: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate and reversed pairs collapse
    /// to one undirected edge.
    pub fn new(n: usize, edge_list: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for &(a, b) in edge_list {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange { a, b, n });
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set.into_iter().collect(),
            adjacency,
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.adjacency[i]
    }

    #[inline]
    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        a < self.n && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Position of edge `(a, b)` (either orientation) in [`Graph::edges`].
    pub fn edge_index(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> IntMatrix {
        let mut l = IntMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            l[(i, i)] = self.degree(i) as i64;
        }
        for &(a, b) in &self.edges {
            l[(a, b)] = -1;
            l[(b, a)] = -1;
        }
        l
    }

    /// Breadth-first distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for &w in self.neighbors(v) {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Checks that every member of `c` is a node of this graph.
    pub fn check_cluster(&self, c: &Cluster) -> Result<(), GraphError> {
        match c.members().iter().find(|&&v| v >= self.n) {
            Some(&node) => Err(GraphError::MemberOutOfRange { node, n: self.n }),
            None => Ok(()),
        }
    }

    /// Graph on `|c|` nodes, relabeled `0..|c|` in cluster order, keeping only
    /// intra-cluster edges.
    pub fn induced_subgraph(&self, c: &Cluster) -> Result<Graph, GraphError> {
        self.check_cluster(c)?;
        let mut local = vec![usize::MAX; self.n];
        for (k, &v) in c.members().iter().enumerate() {
            local[v] = k;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|(a, b)| local[*a] != usize::MAX && local[*b] != usize::MAX)
            .map(|&(a, b)| (local[a], local[b]))
            .collect();
        Graph::new(c.len(), &edges)
    }

    /// Whether the subgraph induced by `c` is connected.
    pub fn cluster_is_connected(&self, c: &Cluster) -> Result<bool, GraphError> {
        Ok(self.induced_subgraph(c)?.is_connected())
    }

    /// Nodes not in `c`, ascending.
    pub fn complement(&self, c: &Cluster) -> Vec<NodeId> {
        let mut inside = vec![false; self.n];
        for &v in c.members() {
            inside[v] = true;
        }
        (0..self.n).filter(|&v| !inside[v]).collect()
    }

    /// Diagonal block and bridge matrix of the Laplacian for cluster `c`.
    pub fn block_view(&self, c: &Cluster) -> Result<BlockView, GraphError> {
        self.check_cluster(c)?;
        let outside = self.complement(c);
        if outside.is_empty() {
            return Err(GraphError::ClusterIsWholeGraph);
        }
        let l = self.laplacian();
        Ok(BlockView {
            diagonal_block: l.select(c.members(), c.members()),
            bridge_matrix: l.select(c.members(), &outside),
            cluster_order: c.members().to_vec(),
            external_order: outside,
        })
    }

    /// Splits the diagonal block into the induced-subgraph Laplacian and the
    /// diagonal matrix of degree deficiencies.
    pub fn degree_deficiency_decomposition(&self, c: &Cluster) -> Result<(IntMatrix, IntMatrix), GraphError> {
        if self.complement(c).is_empty() {
            self.check_cluster(c)?;
            return Err(GraphError::ClusterIsWholeGraph);
        }
        let sub = self.induced_subgraph(c)?;
        let local = sub.laplacian();
        let mut deficiency = IntMatrix::zeros(c.len(), c.len());
        for (k, &v) in c.members().iter().enumerate() {
            deficiency[(k, k)] = (self.degree(v) - sub.degree(k)) as i64;
        }
        Ok((local, deficiency))
    }

    /// Collects every Assumption violation of `p` on this graph.
    pub fn validate_partition(&self, p: &Partition) -> PartitionReport {
        let mut violations = Vec::new();
        if !self.is_connected() {
            violations.push(PartitionViolation::GraphDisconnected);
        }
        if p.clusters.len() < 2 {
            violations.push(PartitionViolation::TooFewClusters(p.clusters.len()));
        }
        let mut owner: Vec<Option<usize>> = vec![None; self.n];
        for (ci, members) in p.clusters.iter().enumerate() {
            if members.is_empty() {
                violations.push(PartitionViolation::EmptyCluster(ci));
                continue;
            }
            let mut seen = BTreeSet::new();
            for &v in members {
                if v >= self.n {
                    violations.push(PartitionViolation::OutOfRange { cluster: ci, node: v });
                    continue;
                }
                if !seen.insert(v) {
                    violations.push(PartitionViolation::Overlap {
                        node: v,
                        clusters: (ci, ci),
                    });
                    continue;
                }
                match owner[v] {
                    Some(prev) => violations.push(PartitionViolation::Overlap {
                        node: v,
                        clusters: (prev, ci),
                    }),
                    None => owner[v] = Some(ci),
                }
            }
            let valid: Vec<_> = seen.into_iter().collect();
            if let Ok(c) = Cluster::new(valid) {
                if !self.induced_subgraph(&c).map(|g| g.is_connected()).unwrap_or(false) {
                    violations.push(PartitionViolation::DisconnectedCluster(ci));
                }
            }
        }
        let missing: Vec<_> = (0..self.n).filter(|&v| owner[v].is_none()).collect();
        if !missing.is_empty() {
            violations.push(PartitionViolation::IncompleteCover(missing));
        }
        PartitionReport { violations }
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.edges)
            .finish()
    }
}

/// Non-empty list of distinct node ids. Order is significant: it fixes the
/// row order of block views and the relabeling of induced subgraphs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cluster {
    members: Vec<NodeId>,
}

impl Cluster {
    pub fn new(members: Vec<NodeId>) -> Result<Self, GraphError> {
        if members.is_empty() {
            return Err(GraphError::EmptyCluster);
        }
        let mut seen = BTreeSet::new();
        for &v in &members {
            if !seen.insert(v) {
                return Err(GraphError::DuplicateMember(v));
            }
        }
        Ok(Self { members })
    }

    pub fn singleton(v: NodeId) -> Self {
        Self { members: vec![v] }
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.members.contains(&v)
    }

    /// Copy of this cluster with `v` appended.
    pub fn with(&self, v: NodeId) -> Result<Self, GraphError> {
        let mut members = self.members.clone();
        members.push(v);
        Self::new(members)
    }

    pub fn sorted(&self) -> Vec<NodeId> {
        let mut m = self.members.clone();
        m.sort_unstable();
        m
    }
}

/// A candidate partition. Kept as raw lists so malformed input can be
/// reported rather than rejected at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub clusters: Vec<Vec<NodeId>>,
}

impl Partition {
    pub fn new(clusters: Vec<Vec<NodeId>>) -> Self {
        Self { clusters }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionViolation {
    GraphDisconnected,
    TooFewClusters(usize),
    EmptyCluster(usize),
    OutOfRange { cluster: usize, node: NodeId },
    Overlap { node: NodeId, clusters: (usize, usize) },
    IncompleteCover(Vec<NodeId>),
    DisconnectedCluster(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionReport {
    pub violations: Vec<PartitionViolation>,
}

impl PartitionReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Rows of the Laplacian indexed by a cluster, split into the principal block
/// and the bridge to the remaining nodes (ascending id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockView {
    pub diagonal_block: IntMatrix,
    pub bridge_matrix: IntMatrix,
    pub cluster_order: Vec<NodeId>,
    pub external_order: Vec<NodeId>,
}
