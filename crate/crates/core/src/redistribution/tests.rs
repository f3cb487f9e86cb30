use super::*;
use crate::dof::cluster_dof;

fn network(g: Graph, refs: Vec<f64>, loads: Vec<f64>, u_max: Vec<f64>) -> SteadyStateNetwork {
    let n = g.node_count();
    let m = g.edges().len();
    SteadyStateNetwork::new(
        g,
        vec![1.0; m],
        vec![0.2; n],
        vec![24.0; n],
        refs,
        loads,
        vec![0.0; n],
        u_max,
    )
    .unwrap()
}

fn cluster(v: &[usize]) -> Cluster {
    Cluster::new(v.to_vec()).unwrap()
}

#[test]
fn equal_voltages_carry_no_flux() {
    let g = Graph::new(2, &[(0, 1)]).unwrap();
    let net = network(g, vec![12.0, 12.0], vec![2.0, 1.5], vec![1.0; 2]);
    let s = net.at_references();
    assert_eq!(s.edge_flux, vec![0.0]);
    assert_eq!(s.current, vec![2.0, 1.5]);
    assert!((s.duty[0] - (12.0 + 0.2 * 2.0) / 24.0).abs() < 1e-15);
}

#[test]
fn flux_is_antisymmetric() {
    let g = Graph::new(2, &[(0, 1)]).unwrap();
    let net = SteadyStateNetwork::new(
        g,
        vec![0.5],
        vec![0.2; 2],
        vec![24.0; 2],
        vec![12.0, 13.0],
        vec![0.0; 2],
        vec![0.0; 2],
        vec![1.0; 2],
    )
    .unwrap();
    let s = net.at_references();
    assert_eq!(s.node_flux, vec![0.5, -0.5]);
    // Power balance: converter currents sum to the loads.
    assert!((s.current.iter().sum::<f64>() - 0.0).abs() < 1e-15);
}

#[test]
fn raising_helpers_pushes_flux_into_overloaded_node() {
    let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
    let net = network(g, vec![12.0, 12.6, 12.9], vec![2.0; 3], vec![1.0; 3]);
    let s = net.at_references();
    assert!(s.edge_flux[0] > 0.0, "into node 0 from node 1");
    assert!(s.edge_flux[1] > 0.0, "into node 1 from node 2");
}

#[test]
fn invalid_networks_are_rejected() {
    let g = Graph::new(2, &[(0, 1)]).unwrap();
    let err = SteadyStateNetwork::new(
        g.clone(),
        vec![0.0],
        vec![0.2; 2],
        vec![24.0; 2],
        vec![12.0; 2],
        vec![1.0; 2],
        vec![0.0; 2],
        vec![1.0; 2],
    );
    assert!(matches!(err, Err(RedistributionError::Conductance { .. })));
    let err = SteadyStateNetwork::new(
        g,
        vec![1.0],
        vec![0.2; 2],
        vec![24.0; 2],
        vec![12.0; 2],
        vec![1.0; 2],
        vec![0.6, 0.0],
        vec![0.5, 1.0],
    );
    assert!(matches!(err, Err(RedistributionError::NodeParameter { node: 0, .. })));
}

#[test]
fn path_cluster_freezes_boundary_node() {
    let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
    let net = network(g, vec![12.0; 3], vec![2.0; 3], vec![1.0; 3]);
    let p = assemble_problem(&net, &cluster(&[0, 1]), &CostSpec::default()).unwrap();
    assert_eq!(p.external_neighbors(), &[2]);
    assert_eq!(p.free_dimension(), 1);
    let basis = p.null_basis();
    assert!(basis[(1, 0)].abs() < 1e-15, "boundary node cannot move");
    assert!((basis[(0, 0)].abs() - 1.0).abs() < 1e-15);
}

#[test]
fn example_cluster_keeps_net_injection() {
    let g = Graph::new(6, &[(0, 1), (1, 2), (1, 3), (2, 3), (3, 4), (3, 5)]).unwrap();
    let net = network(g.clone(), vec![12.0; 6], vec![2.0; 6], vec![1.0; 6]);
    let c = cluster(&[2, 3, 4, 5]);
    let p = assemble_problem(&net, &c, &CostSpec::default()).unwrap();
    assert_eq!(p.external_neighbors(), &[1]);
    let row: Vec<f64> = p.containment_matrix().row(0).iter().copied().collect();
    assert_eq!(row, vec![1.0, 1.0, 0.0, 0.0]);
    assert_eq!(p.free_dimension(), cluster_dof(&g, &c).unwrap().dof);
    // Moving 3 up and 4 down by the same amount is allowed.
    let delta = DVector::from_vec(vec![0.3, -0.3, 0.0, 0.0]);
    assert!(p.containment_residual(&delta) < 1e-15);
}

#[test]
fn singleton_has_no_freedom() {
    let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
    let ok = network(g.clone(), vec![12.0; 3], vec![2.0; 3], vec![1.0; 3]);
    let p = assemble_problem(&ok, &cluster(&[1]), &CostSpec::default()).unwrap();
    assert_eq!(p.free_dimension(), 0);
    let s = solve(&p).unwrap();
    assert!(s.is_feasible());
    assert_eq!(s.delta, vec![0.0]);

    let tight = network(g, vec![12.0; 3], vec![2.0; 3], vec![1.0, 0.5, 1.0]);
    let p = assemble_problem(&tight, &cluster(&[1]), &CostSpec::default()).unwrap();
    assert_eq!(solve(&p).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn whole_graph_cluster_is_allowed() {
    let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
    let net = network(g, vec![12.0; 3], vec![2.0; 3], vec![1.0; 3]);
    let p = assemble_problem(&net, &cluster(&[0, 1, 2]), &CostSpec::default()).unwrap();
    assert!(p.spans_graph());
    assert_eq!(p.free_dimension(), 3);
    assert!(solve(&p).unwrap().is_feasible());
}

#[test]
fn disconnected_cluster_rejected() {
    let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
    let net = network(g, vec![12.0; 3], vec![2.0; 3], vec![1.0; 3]);
    assert_eq!(
        assemble_problem(&net, &cluster(&[0, 2]), &CostSpec::default()).unwrap_err(),
        RedistributionError::ClusterDisconnected
    );
}

#[test]
fn non_convex_costs_rejected() {
    let g = Graph::new(2, &[(0, 1)]).unwrap();
    let net = network(g, vec![12.0; 2], vec![2.0; 2], vec![1.0; 2]);
    for cost in [
        CostSpec {
            balance_weight: -1.0,
            ..CostSpec::default()
        },
        CostSpec {
            regularization: 0.0,
            ..CostSpec::default()
        },
    ] {
        assert!(matches!(
            assemble_problem(&net, &cluster(&[0]), &cost),
            Err(RedistributionError::NonConvexCost(_))
        ));
    }
}

/// Loads and input voltage picked so that every duty cycle is exactly 1/2.
fn centered_network() -> SteadyStateNetwork {
    let g = Graph::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    // u = (12 + 0.25 * 2) / 25 = 0.5
    SteadyStateNetwork::new(
        g,
        vec![1.0; 3],
        vec![0.25; 4],
        vec![25.0; 4],
        vec![12.0; 4],
        vec![2.0; 4],
        vec![0.0; 4],
        vec![1.0; 4],
    )
    .unwrap()
}

#[test]
fn centered_point_is_optimal() {
    let net = centered_network();
    let p = assemble_problem(&net, &cluster(&[0, 1, 2]), &CostSpec::default()).unwrap();
    let s = solve(&p).unwrap();
    assert!(s.is_feasible());
    assert!(s.delta.iter().all(|d| d.abs() < 1e-12));
    assert!(s.cost.abs() < 1e-20);
}

#[test]
fn bounds_pinned_at_current_duty() {
    let base = centered_network();
    let n = 4;
    let net = SteadyStateNetwork::new(
        base.graph().clone(),
        vec![1.0; 3],
        vec![0.25; n],
        vec![25.0; n],
        vec![12.0; n],
        vec![2.0; n],
        vec![0.5 - 1e-12; n],
        vec![0.5 + 1e-12; n],
    )
    .unwrap();
    let p = assemble_problem(&net, &cluster(&[0, 1, 2]), &CostSpec::default()).unwrap();
    let s = solve(&p).unwrap();
    assert!(s.is_feasible());
    assert!(s.delta.iter().all(|d| d.abs() < 1e-9));
    assert!(s.cost.abs() < 1e-18);
}

/// Path 0-1-2-3 after a load step on node 0 that breaks its upper bound.
fn overloaded_path() -> SteadyStateNetwork {
    let g = Graph::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    network(g, vec![12.0; 4], vec![2.8, 2.0, 2.0, 2.0], vec![0.51, 0.8, 0.8, 0.8])
}

/// Brute-force minimum over the two free references of cluster {0,1,2}
/// (node 2 is frozen by its external neighbor 3) by zooming grid search.
/// Evaluates duty cycles through the steady-state map, not the assembled
/// Jacobian.
fn grid_minimum(net: &SteadyStateNetwork, cost: &CostSpec) -> (f64, [f64; 2]) {
    let eval = |d0: f64, d1: f64| -> Option<f64> {
        let mut v = net.references.clone();
        v[0] += d0;
        v[1] += d1;
        let s = net.steady_state_map(&v);
        let mut total = cost.regularization * (d0 * d0 + d1 * d1);
        for i in 0..3 {
            let (lo, hi) = net.duty_bounds(i);
            if s.duty[i] < lo - 1e-12 || s.duty[i] > hi + 1e-12 {
                return None;
            }
            total += cost.balance_weight * (s.duty[i] - cost.balance_target).powi(2);
        }
        Some(total)
    };
    let (mut c0, mut c1, mut half) = (0.0, 0.0, 20.0);
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for _ in 0..60 {
        let steps = 40;
        for a in 0..=steps {
            for b in 0..=steps {
                let d0 = c0 - half + 2.0 * half * a as f64 / steps as f64;
                let d1 = c1 - half + 2.0 * half * b as f64 / steps as f64;
                if let Some(v) = eval(d0, d1) {
                    if v < best.0 {
                        best = (v, [d0, d1]);
                    }
                }
            }
        }
        c0 = best.1[0];
        c1 = best.1[1];
        half *= 0.7;
    }
    best
}

#[test]
fn overloaded_path_matches_grid_search() {
    let net = overloaded_path();
    assert!(net.at_references().duty[0] > 0.51);
    let cost = CostSpec::default();
    let p = assemble_problem(&net, &cluster(&[0, 1, 2]), &cost).unwrap();
    assert_eq!(p.free_dimension(), 2);
    let s = solve(&p).unwrap();
    assert!(s.is_feasible());
    assert!(s.duty[0] <= 0.51 + BOUND_TOL);
    assert!(s.containment_residual <= BOUND_TOL);
    assert!(s.delta[2].abs() < 1e-12);
    let (grid_cost, _) = grid_minimum(&net, &cost);
    assert!(
        (s.cost - grid_cost).abs() < 1e-6,
        "solver {} grid {}",
        s.cost,
        grid_cost
    );
    assert!(s.cost <= grid_cost + 1e-12);
}

#[test]
fn cost_scaling_keeps_argmin() {
    let net = overloaded_path();
    let c = cluster(&[0, 1, 2]);
    let a = solve(&assemble_problem(&net, &c, &CostSpec::default()).unwrap()).unwrap();
    let b = solve(&assemble_problem(&net, &c, &CostSpec::default().scaled(37.5)).unwrap()).unwrap();
    for (x, y) in a.delta.iter().zip(&b.delta) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn loss_term_penalizes_voltage_gaps() {
    let net = overloaded_path();
    let c = cluster(&[0, 1, 2]);
    let lossy = CostSpec {
        loss_weight: 1.0,
        ..CostSpec::default()
    };
    let p = assemble_problem(&net, &c, &lossy).unwrap();
    let s = solve(&p).unwrap();
    assert!(s.is_feasible());
    // The direct loss evaluation agrees with the assembled quadratic.
    let delta = DVector::from_vec(s.delta.clone());
    let st = net.steady_state_map(&s.references);
    let mut direct = 1e-3 * delta.norm_squared();
    for i in 0..3 {
        direct += (st.duty[i] - 0.5).powi(2);
    }
    for (e, &(a, b)) in net.graph().edges().iter().enumerate() {
        let gap = s.references[a] - s.references[b];
        direct += net.conductance()[e] * gap * gap;
    }
    assert!((direct - s.cost).abs() < 1e-9);
}

#[test]
fn oracle_rejects_zero_dof_cluster_with_violation() {
    let net = overloaded_path();
    let oracle = MicrogridOracle::new(net, CostSpec::default());
    assert!(matches!(oracle.evaluate(&cluster(&[0])), Ok(Verdict::Infeasible)));
    assert!(matches!(oracle.evaluate(&cluster(&[0, 1])), Ok(Verdict::Feasible(_))));
}

#[test]
fn report_lists_constraints() {
    let net = overloaded_path();
    let p = assemble_problem(&net, &cluster(&[0, 1, 2]), &CostSpec::default()).unwrap();
    let text = p.to_string();
    assert!(text.starts_with("problem cluster=[0,1,2] free_dim=2 containment_rank=1"));
    assert!(text.contains("containment ext=3 1*dV[2] = 0"));
    let s = solve(&p).unwrap();
    assert!(s.render(&|v| (v + 1).to_string()).contains("node 1 "));
}
