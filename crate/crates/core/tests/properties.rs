mod common;

use common::*;
use dofnet::clustering::{dof_greedy_cluster, ksteps_cluster, Availability, ExplorationState, GrowthRule};
use dofnet::dof::{cluster_dof, exact_determinant, exact_rank, rank_difference, spectral_positivity_check};
use dofnet::graph::{Cluster, Graph, Partition};
use dofnet::mgrid::{run_scenario, Scenario};
use dofnet::redistribution::{assemble_problem, solve, CostSpec, SteadyStateNetwork, BOUND_TOL};
use dofnet::scenario::{parse_scenario, scenario_to_json};
use nalgebra::DVector;
use num_traits::Zero;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_network<R: Rng>(rng: &mut R, g: Graph, unit: bool) -> SteadyStateNetwork {
    let n = g.node_count();
    let m = g.edges().len();
    SteadyStateNetwork::new(
        g,
        (0..m)
            .map(|_| if unit { 1.0 } else { rng.gen_range(0.5..2.0) })
            .collect(),
        (0..n).map(|_| rng.gen_range(0.1..0.3)).collect(),
        vec![24.0; n],
        (0..n).map(|_| rng.gen_range(11.8..12.8)).collect(),
        (0..n).map(|_| rng.gen_range(1.0..3.0)).collect(),
        vec![0.05; n],
        vec![0.95; n],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn laplacian_rows_sum_to_zero(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..15);
        let g = random_connected_graph(&mut r, n, 0.3);
        let l = g.laplacian();
        prop_assert!(l.is_symmetric());
        for i in 0..n {
            prop_assert_eq!(l.row_sum(i), 0);
        }
    }

    #[test]
    fn block_view_splits_laplacian_rows(seed in any::<u64>()) {
        let (g, c) = random_instance(&mut rng(seed), 16);
        let b = g.block_view(&c).unwrap();
        prop_assert_eq!(&b.external_order, &g.complement(&c));
        for (k, &v) in c.members().iter().enumerate() {
            let off_block: i64 = (0..c.len()).filter(|&j| j != k).map(|j| b.diagonal_block[(k, j)]).sum();
            let bridge: i64 = b.bridge_matrix.row(k).iter().sum();
            prop_assert_eq!(b.diagonal_block[(k, k)], -(off_block + bridge));
            prop_assert_eq!(b.diagonal_block[(k, k)], g.degree(v) as i64);
        }
    }

    #[test]
    fn degree_deficiency_decomposition_adds_up(seed in any::<u64>()) {
        let (g, c) = random_instance(&mut rng(seed), 16);
        let (local, deficiency) = g.degree_deficiency_decomposition(&c).unwrap();
        let block = g.block_view(&c).unwrap().diagonal_block;
        for i in 0..c.len() {
            prop_assert_eq!(local.row_sum(i), 0);
            for j in 0..c.len() {
                if i != j {
                    prop_assert_eq!(deficiency[(i, j)], 0);
                }
            }
            prop_assert!(deficiency[(i, i)] >= 0);
        }
        prop_assert_eq!(local.add(&deficiency), block);
    }

    #[test]
    fn induced_subgraph_on_all_nodes_is_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..15);
        let g = random_connected_graph(&mut r, n, 0.3);
        let all = Cluster::new((0..n).collect()).unwrap();
        prop_assert_eq!(g.induced_subgraph(&all).unwrap(), g);
    }

    #[test]
    fn validate_partition_matches_definition(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..12);
        let g = random_connected_graph(&mut r, n, 0.25);
        let k = r.gen_range(1..=n.min(4));
        let mut clusters = vec![Vec::new(); k];
        for v in 0..n {
            clusters[r.gen_range(0..k)].push(v);
        }
        let expected = k >= 2
            && clusters.iter().all(|c| {
                !c.is_empty() && g.cluster_is_connected(&Cluster::new(c.clone()).unwrap()).unwrap()
            });
        prop_assert_eq!(g.validate_partition(&Partition::new(clusters)).is_valid(), expected);
    }

    #[test]
    fn exact_rank_matches_rational_oracle(seed in any::<u64>()) {
        let m = random_small_matrix(&mut rng(seed));
        prop_assert_eq!(exact_rank(&m), rational_rank(&m));
        prop_assert_eq!(exact_rank(&m.transpose()), exact_rank(&m));
    }

    #[test]
    fn principal_block_is_nonsingular(seed in any::<u64>()) {
        let (g, c) = random_instance(&mut rng(seed), 20);
        let block = g.block_view(&c).unwrap().diagonal_block;
        prop_assert!(!exact_determinant(&block).unwrap().is_zero());
        prop_assert!(spectral_positivity_check(&block, 1e-9).unwrap());
    }

    #[test]
    fn dof_is_below_cluster_size(seed in any::<u64>()) {
        let (g, c) = random_instance(&mut rng(seed), 20);
        let r = cluster_dof(&g, &c).unwrap();
        prop_assert!(r.dof < c.len());
        prop_assert_eq!(r.dof + r.deficiency, c.len());
    }

    #[test]
    fn reordered_leading_block_is_nonsingular(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (g, c) = random_instance(&mut r, 16);
        use rand::seq::SliceRandom;
        let mut head = c.members().to_vec();
        let mut tail = g.complement(&c);
        head.shuffle(&mut r);
        tail.shuffle(&mut r);
        let order: Vec<usize> = head.iter().chain(&tail).copied().collect();
        let permuted = g.laplacian().select(&order, &order);
        let lead: Vec<usize> = (0..c.len()).collect();
        prop_assert!(!exact_determinant(&permuted.select(&lead, &lead)).unwrap().is_zero());
    }

    #[test]
    fn dof_shortcut_equals_rank_difference(seed in any::<u64>()) {
        let (g, c) = random_instance(&mut rng(seed), 16);
        let b = g.block_view(&c).unwrap();
        let r = cluster_dof(&g, &c).unwrap();
        prop_assert_eq!(r.dof as i64, rank_difference(&b.diagonal_block, &b.bridge_matrix));
    }

    #[test]
    fn duplicate_external_pattern_keeps_deficiency(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (g, c) = random_instance(&mut r, 14);
        let before = cluster_dof(&g, &c).unwrap();
        // Copy one external neighbour's cluster attachments onto a new node.
        let ext: Vec<usize> = frontier_of(&g, &c).into_iter().collect();
        let k = ext[r.gen_range(0..ext.len())];
        let n = g.node_count();
        let mut edges = g.edges().to_vec();
        edges.push((k, n));
        for &w in g.neighbors(k) {
            if c.contains(w) {
                edges.push((w, n));
            }
        }
        let h = Graph::new(n + 1, &edges).unwrap();
        let after = cluster_dof(&h, &c).unwrap();
        prop_assert_eq!(after.deficiency, before.deficiency);
    }

    #[test]
    fn greedy_growth_invariants(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(3..16);
        let p = r.gen_range(0.0..0.4);
        let g = random_connected_graph(&mut r, n, p);
        let av = Availability::new((0..n).map(|_| r.gen_range(0.0..3.0)).collect()).unwrap();
        let start = r.gen_range(0..n);
        let mut st = ExplorationState::new(&g, start).unwrap();
        while st.cluster().len() < n - 1 {
            let before = st.current_dof();
            let size = st.cluster().len();
            let step = st.grow(&g, &av).unwrap();
            prop_assert_eq!(st.cluster().len(), size + 1);
            prop_assert!(g.cluster_is_connected(st.cluster()).unwrap());
            prop_assert_eq!(st.frontier(), &frontier_of(&g, st.cluster()));
            prop_assert_eq!(step.dof_after, cluster_dof(&g, st.cluster()).unwrap().dof);
            if step.rule == GrowthRule::DofIncrease {
                prop_assert!(step.dof_after > before);
            }
        }
        let never = |_: &Cluster| None::<()>;
        let a = dof_greedy_cluster(&g, start, &av, &never, None).unwrap_err();
        let b = dof_greedy_cluster(&g, start, &av, &never, None).unwrap_err();
        prop_assert_eq!(a.trace(), b.trace());
        prop_assert_eq!(&a.trace()[..n - 2], st.trace());
    }

    #[test]
    fn ksteps_balls_are_nested(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..20);
        let g = random_connected_graph(&mut r, n, 0.15);
        let v = r.gen_range(0..n);
        for k in 0..5 {
            let inner = ksteps_cluster(&g, v, k).unwrap();
            let outer = ksteps_cluster(&g, v, k + 1).unwrap();
            prop_assert!(inner.members().iter().all(|&x| outer.contains(x)));
        }
    }

    #[test]
    fn steady_state_flux_balances(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..14);
        let g = random_connected_graph(&mut r, n, 0.3);
        let net = random_network(&mut r, g, false);
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(11.0..13.0)).collect();
        let s = net.steady_state_map(&v);
        let edges = net.graph().edges();
        let mut into = vec![0.0; n];
        for (e, &(a, b)) in edges.iter().enumerate() {
            // xi_ab into a, xi_ba = -xi_ab into b
            into[a] += s.edge_flux[e];
            into[b] -= s.edge_flux[e];
            let back = net.conductance()[e] * (v[a] - v[b]);
            prop_assert_eq!(s.edge_flux[e], -back);
        }
        for i in 0..n {
            prop_assert!((into[i] - s.node_flux[i]).abs() < 1e-12);
        }
        let total_i: f64 = s.current.iter().sum();
        let total_d: f64 = net.loads.iter().sum();
        prop_assert!((total_i - total_d).abs() < 1e-9);
    }

    #[test]
    fn feasible_solutions_contain_flux(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (g, c) = random_instance(&mut r, 14);
        let net = random_network(&mut r, g, false);
        let p = assemble_problem(&net, &c, &CostSpec::default()).unwrap();
        let s = solve(&p).unwrap();
        prop_assume!(s.is_feasible());
        prop_assert!(s.containment_residual <= 1e-9);
        // Independent check through the steady-state map.
        let before = net.at_references();
        let after = net.steady_state_map(&s.references);
        for k in net.graph().complement(&c) {
            prop_assert!((after.node_flux[k] - before.node_flux[k]).abs() <= 1e-9);
        }
        for (i, &u) in after.duty.iter().enumerate() {
            let (lo, hi) = net.duty_bounds(i);
            if c.contains(i) {
                prop_assert!(u >= lo - BOUND_TOL && u <= hi + BOUND_TOL);
            }
        }
    }

    #[test]
    fn null_space_dimension_is_dof(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (g, c) = random_instance(&mut r, 16);
        let dof = cluster_dof(&g, &c).unwrap().dof;
        let net = random_network(&mut r, g, true);
        let p = assemble_problem(&net, &c, &CostSpec::default()).unwrap();
        prop_assert_eq!(p.free_dimension(), dof);
    }

    #[test]
    fn cost_scaling_keeps_argmin(seed in any::<u64>(), factor in 0.01f64..100.0) {
        let mut r = rng(seed);
        let (g, c) = random_instance(&mut r, 12);
        let net = random_network(&mut r, g, false);
        let cost = CostSpec { loss_weight: r.gen_range(0.0..0.1), ..CostSpec::default() };
        let a = solve(&assemble_problem(&net, &c, &cost).unwrap()).unwrap();
        let b = solve(&assemble_problem(&net, &c, &cost.scaled(factor)).unwrap()).unwrap();
        prop_assert_eq!(a.status, b.status);
        let diff = (DVector::from_vec(a.delta) - DVector::from_vec(b.delta)).amax();
        prop_assert!(diff < 1e-9, "{}", diff);
    }
}

fn small_scenario<R: Rng>(r: &mut R) -> Scenario {
    let n = r.gen_range(2..6);
    let g = random_connected_graph(r, n, 0.4);
    let text = |i: usize| format!("n{}", (b'a' + i as u8) as char);
    let edges: Vec<String> = g
        .edges()
        .iter()
        .map(|&(a, b)| {
            format!(
                r#"{{"a": "{}", "b": "{}", "g": {}}}"#,
                text(a),
                text(b),
                r.gen_range(0.5..2.0)
            )
        })
        .collect();
    let labels: Vec<String> = (0..n).map(|i| format!("\"{}\"", text(i))).collect();
    let loads: Vec<String> = (1..n)
        .map(|i| format!("\"{}\": {}", text(i), r.gen_range(1.0..3.0)))
        .collect();
    let doc = format!(
        r#"{{
            "graph": {{"n": {n}, "labels": [{}], "edges": [{}]}},
            "converters": {{"overrides": {{"{}": {{"resistance": {}, "u_max": 0.9}}}}}},
            "references": {{"default": {}}},
            "loads": {{"default": 2.0, "overrides": {{{}}}}},
            "schedule": [{{"t": 0.01, "node": "{}", "load": {}}}],
            "secondary": {{"policy": "scheduled", "times": [0.02], "algorithm": "both"}},
            "sim": {{"h": 0.0001, "horizon": 0.05, "seed": {}}}
        }}"#,
        labels.join(", "),
        edges.join(", "),
        text(0),
        r.gen_range(0.1..0.3),
        r.gen_range(11.5..13.0),
        loads.join(", "),
        text(n - 1),
        r.gen_range(0.5..40.0),
        r.gen::<u32>(),
    );
    parse_scenario(&doc).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scenario_round_trip(seed in any::<u64>()) {
        let s = small_scenario(&mut rng(seed));
        let again = parse_scenario(&scenario_to_json(&s)).unwrap();
        prop_assert_eq!(&again, &s);
        prop_assert_eq!(scenario_to_json(&again), scenario_to_json(&s));
    }

    #[test]
    fn duties_stay_in_unit_interval(seed in any::<u64>()) {
        let s = small_scenario(&mut rng(seed));
        let out = run_scenario(&s).unwrap();
        for u in out.series.duty.iter().flatten() {
            prop_assert!((0.0..=1.0).contains(u));
        }
    }
}
