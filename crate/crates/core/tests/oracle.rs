mod common;

use uav_cloudlet::models::{equal_allocation, evaluate};
use uav_cloudlet::oracle::{
    grid_search, grid_search_with_budget, grid_step_energy, primal_descent, DescentConfig,
    OracleError,
};
use uav_cloudlet::scenario::{reference_doc, reference_scenario, Scenario, Trajectory};
use uav_cloudlet::solver::{optimize, SolverConfig, Status};

/// Frames-`frames` scenario with the reference physics, `input_bits` of input and
/// the UAV at the given waypoints.
fn waypoint_scenario(input_bits: f64, positions: Vec<[f64; 3]>, budget_j: f64) -> Scenario {
    let mut s = reference_doc(positions.len() as f64 * 0.1, [0.0; 3])
        .into_scenario()
        .unwrap();
    s.application.input_bits = input_bits;
    s.trajectory = Trajectory::Waypoints { positions };
    s.devices.cloudlet_budget_j = budget_j;
    s.checked().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn grid_single_slot_is_the_forced_point() {
    let s = waypoint_scenario(
        1e5,
        vec![[5.0, 5.0, 5.0], [4.0, 4.0, 4.0], [3.0, 3.0, 3.0]],
        1e5,
    );
    let (alloc, energy) = grid_search(&s, 10_000.0).unwrap();
    assert_eq!(alloc.uplink, vec![1e5]);
    assert_eq!(alloc.compute, vec![1e5]);
    assert_eq!(alloc.downlink, vec![9e4]);
    assert_eq!(energy, evaluate(&s, &alloc).unwrap().mobile_uplink_j.total);
}

#[test]
fn grid_hovering_splits_uplink_equally() {
    let s = waypoint_scenario(1e5, vec![[5.0, 5.0, 5.0]; 4], 1e9);
    let (alloc, _) = grid_search(&s, 5_000.0).unwrap();
    assert_eq!(alloc.uplink, vec![50_000.0, 50_000.0]);
}

#[test]
fn grid_skew_matches_water_filling() {
    // Slot 2 twice as far as slot 1: gain ratio 4.
    let p1 = [3.0, 4.0, 0.0];
    let p2 = [6.0, 8.0, 0.0];
    let s = waypoint_scenario(2e5, vec![p1, p2, [5.0, 5.0, 5.0], [5.0, 5.0, 5.0]], 1e9);
    let grid = 5_000.0;
    let (alloc, _) = grid_search(&s, grid).unwrap();
    let bd = s.channel.bandwidth_hz * s.timing.slot_s;
    let expected = bd * 4f64.log2();
    assert_eq!(expected, 100_000.0);
    let skew = alloc.uplink[0] - alloc.uplink[1];
    assert!((skew - expected).abs() <= grid, "skew {skew}");

    let sol = optimize(&s, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, Status::Converged);
    let exact = sol.allocation.uplink[0] - sol.allocation.uplink[1];
    assert!(
        (exact - expected).abs() <= 1e-3 * s.application.input_bits,
        "skew {exact}"
    );
}

#[test]
fn grid_rejects_oversized_instances() {
    let s = common::toy(3, 5);
    assert!(matches!(
        grid_search_with_budget(&s, 1_000.0, 1_000),
        Err(OracleError::TooLarge { .. })
    ));
    assert!(matches!(
        grid_search(&s, 3_000.0),
        Err(OracleError::GridMismatch { .. })
    ));
    assert!(matches!(
        grid_search(&reference_scenario(), 1e5),
        Err(OracleError::TooManySlots(48))
    ));
}

#[test]
fn solver_brackets_grid_optimum() {
    let cfg = SolverConfig::default();
    for seed in 0..6 {
        let s = common::toy(seed, 4 + (seed as usize % 2));
        let (grid_alloc, grid_j) = grid_search(&s, common::TOY_GRID_BITS).unwrap();
        let sol = optimize(&s, &cfg).unwrap();
        assert_eq!(sol.status, Status::Converged, "seed {seed}");
        let step = grid_step_energy(&s, &grid_alloc, common::TOY_GRID_BITS);
        assert!(
            sol.primal_value <= grid_j + step,
            "seed {seed}: {} vs {grid_j} + {step}",
            sol.primal_value
        );
        assert!(sol.dual_value <= grid_j * (1.0 + 1e-12), "seed {seed}");
    }
}

#[test]
fn descent_stays_at_optimal_start_when_hovering() {
    let s = common::hovering();
    let equal = evaluate(&s, &equal_allocation(&s))
        .unwrap()
        .mobile_uplink_j
        .total;
    let (_, energy) = primal_descent(&s, &DescentConfig::default()).unwrap();
    assert!(rel(energy, equal) <= 1e-6, "{energy} vs {equal}");
}

#[test]
fn descent_agrees_with_solver_on_reference() {
    let s = reference_scenario();
    let sol = optimize(&s, &SolverConfig::default()).unwrap();
    let (_, energy) = primal_descent(&s, &DescentConfig::default()).unwrap();
    assert!(
        rel(sol.primal_value, energy) <= 5e-3,
        "{} vs {energy}",
        sol.primal_value
    );
    // A feasible point can never beat the dual bound beyond rounding.
    assert!(
        sol.dual_value <= energy * (1.0 + 1e-12),
        "{} vs {energy}",
        sol.dual_value
    );
    assert!(sol.primal_value <= energy * (1.0 + SolverConfig::default().dual_tol));
}

#[test]
fn descent_returns_feasible_points() {
    for seed in 20..26 {
        let s = common::toy(seed, 5);
        let (alloc, energy) = primal_descent(&s, &DescentConfig::default()).unwrap();
        let r = evaluate(&s, &alloc).unwrap();
        let tol = 1e-6 * s.application.input_bits;
        assert!(r.budget_residual_j <= 0.0);
        assert!(r.max_causality_violation() <= tol);
        assert!(r.totals_residuals.max_abs() <= tol);
        assert_eq!(energy, r.mobile_uplink_j.total);
    }
}

#[test]
fn descent_reports_infeasible_start() {
    let mut s = reference_scenario();
    s.devices.cloudlet_budget_j = 1.0;
    assert!(matches!(
        primal_descent(&s, &DescentConfig::default()),
        Err(OracleError::InfeasibleStart { excess_j, .. }) if excess_j > 8e4
    ));
}
