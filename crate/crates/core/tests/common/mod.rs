#![allow(dead_code)]

use std::collections::BTreeSet;

use dofnet::graph::{Cluster, Graph, NodeId};
use dofnet::matrix::IntMatrix;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random spanning tree plus independent extra edges with probability `p`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Graph {
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        edges.push((order[k], parent));
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

/// Connected proper cluster of the given size, grown from a random seed by
/// adding random frontier nodes.
pub fn random_connected_cluster<R: Rng>(rng: &mut R, g: &Graph, size: usize) -> Cluster {
    assert!(size >= 1 && size < g.node_count());
    let seed = rng.gen_range(0..g.node_count());
    let mut members = BTreeSet::from([seed]);
    while members.len() < size {
        let frontier: Vec<NodeId> = members
            .iter()
            .flat_map(|&v| g.neighbors(v).iter().copied())
            .filter(|w| !members.contains(w))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        members.insert(*frontier.choose(rng).unwrap());
    }
    Cluster::new(members.into_iter().collect()).unwrap()
}

/// Graph with `n` in `3..=max_n` and a connected proper cluster on it.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize) -> (Graph, Cluster) {
    let n = rng.gen_range(3..=max_n);
    let p = rng.gen_range(0.0..0.5);
    let g = random_connected_graph(rng, n, p);
    let size = rng.gen_range(1..n);
    let c = random_connected_cluster(rng, &g, size);
    (g, c)
}

/// Neighbourhood of `c` recomputed from scratch.
pub fn frontier_of(g: &Graph, c: &Cluster) -> BTreeSet<NodeId> {
    c.members()
        .iter()
        .flat_map(|&v| g.neighbors(v).iter().copied())
        .filter(|w| !c.contains(*w))
        .collect()
}

/// Rank by Gauss-Jordan elimination over exact rationals.
pub fn rational_rank(m: &IntMatrix) -> usize {
    let mut a: Vec<Vec<BigRational>> = m
        .to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(|x| BigRational::from_integer(x.into())).collect())
        .collect();
    let (rows, cols) = (m.rows(), m.cols());
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        let inv = BigRational::one() / a[rank][col].clone();
        for x in a[rank].iter_mut() {
            *x = x.clone() * inv.clone();
        }
        for r in 0..rows {
            if r != rank && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..cols {
                    let v = a[rank][c].clone() * f.clone();
                    a[r][c] = a[r][c].clone() - v;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Small integer matrix with entries in `[-5, 5]`; about half of them get
/// duplicated, negated or zeroed rows so rank deficiency is common.
pub fn random_small_matrix<R: Rng>(rng: &mut R) -> IntMatrix {
    let rows = rng.gen_range(1..=10);
    let cols = rng.gen_range(1..=10);
    let mut data: Vec<Vec<i64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-5..=5)).collect())
        .collect();
    if rows > 1 && rng.gen_bool(0.5) {
        for _ in 0..rng.gen_range(1..rows) {
            let (src, dst) = (rng.gen_range(0..rows), rng.gen_range(0..rows));
            data[dst] = match rng.gen_range(0..3) {
                0 => data[src].clone(),
                1 => data[src].iter().map(|x| -x).collect(),
                _ => vec![0; cols],
            };
        }
    }
    IntMatrix::from_rows(&data)
}
