//! Exact rank arithmetic and the degree-of-freedom measure of a cluster.
//!
//! The dof of a connected proper cluster `C` of a connected graph is
//! `rank(C_block) - rank(bridge)`. The principal block is always nonsingular
//! under those two connectivity conditions, so only the bridge rank is ever
//! computed on the hot path.
//!
//! Ranks and determinants use fraction-free (Bareiss) elimination. It runs
//! in checked `i128` first and restarts in arbitrary precision when an
//! intermediate minor would overflow, so no result is ever wrapped.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::graph::{Cluster, Graph, GraphError};
use crate::matrix::IntMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DofError {
    #[error("graph is not connected")]
    GraphDisconnected,
    #[error("cluster does not induce a connected subgraph")]
    ClusterDisconnected,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("symmetric eigensolver did not converge")]
    EigenNoConvergence,
}

trait ExactInt: Clone {
    fn from_i64(v: i64) -> Self;
    fn is_zero(&self) -> bool;
    /// `(a * b - c * d) / p`, where the division is known to be exact.
    fn cross_div(a: &Self, b: &Self, c: &Self, d: &Self, p: &Self) -> Option<Self>;
}

impl ExactInt for i128 {
    fn from_i64(v: i64) -> Self {
        v as i128
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn cross_div(a: &Self, b: &Self, c: &Self, d: &Self, p: &Self) -> Option<Self> {
        let num = a.checked_mul(*b)?.checked_sub(c.checked_mul(*d)?)?;
        debug_assert_eq!(num % p, 0);
        Some(num / p)
    }
}

impl ExactInt for BigInt {
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn cross_div(a: &Self, b: &Self, c: &Self, d: &Self, p: &Self) -> Option<Self> {
        Some((a * b - c * d) / p)
    }
}

struct Elimination<T> {
    rank: usize,
    /// Last nonzero pivot; equals the determinant up to sign when full rank.
    last_pivot: T,
    /// `true` when an odd number of row plus column swaps occurred.
    odd_swaps: bool,
}

/// Fraction-free elimination with full pivoting. Returns `None` on overflow.
fn bareiss<T: ExactInt>(m: &IntMatrix) -> Option<Elimination<T>> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut a: Vec<T> = m.as_slice().iter().map(|&v| T::from_i64(v)).collect();
    let idx = |i: usize, j: usize| i * cols + j;
    let mut prev = T::from_i64(1);
    let mut odd_swaps = false;
    let mut k = 0;
    while k < rows.min(cols) {
        // First nonzero entry of the trailing submatrix, scanning columns.
        let pivot = (k..cols).find_map(|j| (k..rows).find(|&i| !a[idx(i, j)].is_zero()).map(|i| (i, j)));
        let Some((pi, pj)) = pivot else { break };
        if pi != k {
            for j in 0..cols {
                a.swap(idx(pi, j), idx(k, j));
            }
            odd_swaps = !odd_swaps;
        }
        if pj != k {
            for i in 0..rows {
                a.swap(idx(i, pj), idx(i, k));
            }
            odd_swaps = !odd_swaps;
        }
        let pivot_val = a[idx(k, k)].clone();
        for i in (k + 1)..rows {
            let lead = a[idx(i, k)].clone();
            for j in (k + 1)..cols {
                let v = T::cross_div(&a[idx(i, j)], &pivot_val, &lead, &a[idx(k, j)], &prev)?;
                a[idx(i, j)] = v;
            }
            a[idx(i, k)] = T::from_i64(0);
        }
        prev = pivot_val;
        k += 1;
    }
    Some(Elimination {
        rank: k,
        last_pivot: prev,
        odd_swaps,
    })
}

/// Rank over the rationals. Empty matrices have rank 0.
pub fn exact_rank(m: &IntMatrix) -> usize {
    match bareiss::<i128>(m) {
        Some(e) => e.rank,
        None => bareiss::<BigInt>(m)
            .map(|e| e.rank)
            .expect("bigint elimination cannot overflow"),
    }
}

/// Exact determinant of a square matrix.
pub fn exact_determinant(m: &IntMatrix) -> Result<BigInt, MatrixError> {
    if !m.is_square() {
        return Err(MatrixError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if m.rows() == 0 {
        return Ok(BigInt::from(1));
    }
    let det = |rank: usize, pivot: BigInt, odd: bool| {
        if rank < m.rows() {
            BigInt::zero()
        } else if odd {
            -pivot
        } else {
            pivot
        }
    };
    Ok(match bareiss::<i128>(m) {
        Some(e) => det(e.rank, BigInt::from(e.last_pivot), e.odd_swaps),
        None => {
            let e = bareiss::<BigInt>(m).expect("bigint elimination cannot overflow");
            det(e.rank, e.last_pivot, e.odd_swaps)
        }
    })
}

/// `rank(m1) - rank(m2)`; negative for arbitrary inputs is allowed.
pub fn rank_difference(m1: &IntMatrix, m2: &IntMatrix) -> i64 {
    exact_rank(m1) as i64 - exact_rank(m2) as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofReport {
    pub cluster_size: usize,
    pub bridge_rank: usize,
    pub dof: usize,
    /// Number of independent external connections; equals `bridge_rank`.
    pub deficiency: usize,
}

/// Degree of freedom of a cluster. Checks both connectivity preconditions
/// and evaluates a single rank, that of the bridge matrix.
pub fn cluster_dof(g: &Graph, c: &Cluster) -> Result<DofReport, DofError> {
    if !g.is_connected() {
        return Err(DofError::GraphDisconnected);
    }
    cluster_dof_connected(g, c)
}

/// [`cluster_dof`] for callers that already know `g` is connected.
pub(crate) fn cluster_dof_connected(g: &Graph, c: &Cluster) -> Result<DofReport, DofError> {
    if !g.cluster_is_connected(c)? {
        return Err(DofError::ClusterDisconnected);
    }
    let view = g.block_view(c)?;
    let bridge_rank = exact_rank(&view.bridge_matrix);
    Ok(DofReport {
        cluster_size: c.len(),
        bridge_rank,
        dof: c.len() - bridge_rank,
        deficiency: bridge_rank,
    })
}

/// Evaluates many clusters of the same graph; parallel when the `parallel`
/// feature is on. Result order matches input order.
pub fn cluster_dofs(g: &Graph, clusters: &[Cluster]) -> Vec<Result<DofReport, DofError>> {
    if !g.is_connected() {
        return clusters.iter().map(|_| Err(DofError::GraphDisconnected)).collect();
    }
    crate::par::map(clusters, |c| cluster_dof_connected(g, c))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TausskyReport {
    pub irreducible: bool,
    pub diagonally_dominant: bool,
    /// Rows where `|a_ii| > sum_{j != i} |a_ij|`.
    pub strictly_dominant_rows: Vec<usize>,
}

impl TausskyReport {
    /// All three conditions hold, so the matrix is nonsingular.
    pub fn guarantees_nonsingular(&self) -> bool {
        self.irreducible && self.diagonally_dominant && !self.strictly_dominant_rows.is_empty()
    }
}

/// Irreducibility (strong connectivity of the off-diagonal nonzero pattern),
/// row diagonal dominance and existence of a strictly dominant row.
pub fn check_taussky_conditions(m: &IntMatrix) -> Result<TausskyReport, MatrixError> {
    if !m.is_square() {
        return Err(MatrixError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        if n > 0 {
            seen[0] = true;
        }
        while let Some(v) = stack.pop() {
            for w in 0..n {
                let nz = if forward { m[(v, w)] != 0 } else { m[(w, v)] != 0 };
                if w != v && nz && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    let irreducible = n == 0 || (reach(true) && reach(false));
    let mut dominant = true;
    let mut strict = Vec::new();
    for i in 0..n {
        let off: i64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        let diag = m[(i, i)].abs();
        dominant &= diag >= off;
        if diag > off {
            strict.push(i);
        }
    }
    Ok(TausskyReport {
        irreducible,
        diagonally_dominant: dominant,
        strictly_dominant_rows: strict,
    })
}

/// Whether the smallest eigenvalue of a symmetric integer matrix exceeds
/// `tolerance`. Floating point; not used by the clustering path.
pub fn spectral_positivity_check(m: &IntMatrix, tolerance: f64) -> Result<bool, MatrixError> {
    smallest_eigenvalue(m).map(|l| l > tolerance)
}

pub fn smallest_eigenvalue(m: &IntMatrix) -> Result<f64, MatrixError> {
    if !m.is_square() {
        return Err(MatrixError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.is_symmetric() {
        return Err(MatrixError::NotSymmetric);
    }
    let eig = m
        .to_f64()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(MatrixError::EigenNoConvergence)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Conventional density-style scores of a cluster, reported next to the dof
/// to show where they disagree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityScores {
    /// Internal edges over `|C|(|C|-1)/2`; 1 for a clique. 0 for singletons.
    pub intra_density: f64,
    /// Edges leaving the cluster over all edge endpoints in it.
    pub external_fraction: f64,
    /// Probability that one random-walk step from a uniformly chosen cluster
    /// node stays inside the cluster.
    pub stay_probability: f64,
}

pub fn density_scores(g: &Graph, c: &Cluster) -> Result<DensityScores, GraphError> {
    g.check_cluster(c)?;
    let sub = g.induced_subgraph(c)?;
    let k = c.len() as f64;
    let internal = sub.edges().len() as f64;
    let intra_density = if c.len() > 1 {
        internal / (k * (k - 1.0) / 2.0)
    } else {
        0.0
    };
    let total_deg: usize = c.members().iter().map(|&v| g.degree(v)).sum();
    let external = total_deg as f64 - 2.0 * internal;
    let external_fraction = if total_deg > 0 {
        external / total_deg as f64
    } else {
        0.0
    };
    let stay_probability = c
        .members()
        .iter()
        .enumerate()
        .map(|(local, &v)| {
            if g.degree(v) == 0 {
                1.0
            } else {
                sub.degree(local) as f64 / g.degree(v) as f64
            }
        })
        .sum::<f64>()
        / k;
    Ok(DensityScores {
        intra_density,
        external_fraction,
        stay_probability,
    })
}

/// Converts a small determinant to `i64` for display; `None` if it does not fit.
pub fn determinant_i64(m: &IntMatrix) -> Result<Option<i64>, MatrixError> {
    exact_determinant(m).map(|d| d.to_i64())
}
