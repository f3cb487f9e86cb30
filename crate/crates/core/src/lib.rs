//! Degree-of-freedom clustering for networked systems.
//!
//! * [`graph`], [`matrix`]: undirected graphs, Laplacians and the block view a
//!   cluster induces.
//! * [`dof`]: exact rank arithmetic and the dof measure.
//! * [`clustering`]: dof-based greedy growth and the k-steps baseline.
//! * [`redistribution`]: local reference re-optimization with frozen boundary
//!   flux for resistive DC networks.
//! * [`mgrid`]: averaged DC-microgrid simulator driving the whole loop.
//! * [`scenario`]: file formats (edge lists, JSON scenarios).

pub mod clustering;
pub mod dof;
pub mod graph;
pub mod matrix;
pub mod mgrid;
pub mod par;
pub mod redistribution;
pub mod scenario;

pub use clustering::{Availability, ExplorationState, FeasibilityOracle, GrowthRule, TraceStep, Verdict};
pub use dof::{cluster_dof, exact_determinant, exact_rank, rank_difference, DofReport};
pub use graph::{BlockView, Cluster, Graph, NodeId, Partition};
pub use matrix::IntMatrix;
