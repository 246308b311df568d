mod common;

use proptest::prelude::*;
use uav_cloudlet::models::{self, equal_allocation, evaluate, DOWNLINK_OFFSET, UPLINK_OFFSET};
use uav_cloudlet::scenario::{reference_doc, reference_scenario, Scenario};
use uav_cloudlet::solver::{
    dual_value, kkt_residuals, optimize, solve_compute, solve_downlink, solve_uplink, DualState,
    Solution, SolverConfig, Status, StepRule,
};
use uav_cloudlet::BitAllocation;

/// Checks everything a converged solution promises.
fn assert_certified(s: &Scenario, sol: &Solution, cfg: &SolverConfig) {
    assert_eq!(sol.status, Status::Converged);
    let l = s.application.input_bits;
    assert!(sol.rel_gap <= cfg.dual_tol, "rel gap {}", sol.rel_gap);
    assert!(sol.gap <= cfg.dual_tol * sol.primal_value.max(1.0));
    assert!(sol.report.max_causality_violation() <= cfg.feas_tol_bits(l));
    assert!(sol.report.totals_residuals.max_abs() <= cfg.feas_tol_bits(l));
    assert!(sol.report.budget_residual_j <= cfg.dual_tol * s.devices.cloudlet_budget_j);
    assert!(sol.kkt.max_stationarity() <= cfg.kkt_tol, "{:?}", sol.kkt);
    assert!(sol.dual.is_consistent());
    assert!(sol.dual.mu >= cfg.mu_min);
    let recomputed = kkt_residuals(s, sol);
    assert_eq!(recomputed, sol.kkt);
}

fn reference_variant(deadline: f64, v: [f64; 3], budget: f64) -> Option<Scenario> {
    let mut doc = reference_doc(deadline, v);
    doc.devices.cloudlet_budget_j = budget;
    doc.into_scenario().ok()
}

/// Block minimizers of the Lagrangian at `d`.
fn minimizers(s: &Scenario, d: &DualState, cfg: &SolverConfig) -> BitAllocation {
    let m = s.usable_slots();
    let g = s.gains();
    let app = &s.application;
    let slot = s.timing.slot_s;
    let up = solve_uplink(
        &d.alpha,
        &g[UPLINK_OFFSET - 1..][..m],
        &s.channel,
        slot,
        app.input_bits,
        cfg,
    )
    .unwrap();
    let comp = solve_compute(
        d.mu,
        &d.alpha,
        &d.beta,
        app.output_ratio,
        s.devices.gamma_cloudlet,
        app.cycles_per_bit,
        slot,
        app.input_bits,
        cfg,
    )
    .unwrap();
    let down = solve_downlink(
        d.mu,
        &d.beta,
        &g[DOWNLINK_OFFSET - 1..][..m],
        &s.channel,
        slot,
        app.output_ratio * app.input_bits,
        cfg,
    )
    .unwrap();
    BitAllocation {
        uplink: up.bits,
        compute: comp.bits,
        downlink: down.bits,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn toys_converge_with_certificate(seed in 0u64..10_000, frames in 4usize..=5) {
        let s = common::toy(seed, frames);
        let cfg = SolverConfig::default();
        let sol = optimize(&s, &cfg).unwrap();
        assert_certified(&s, &sol, &cfg);
        let equal = evaluate(&s, &equal_allocation(&s)).unwrap().mobile_uplink_j.total;
        prop_assert!(sol.dual_value <= equal * (1.0 + 1e-12));
        prop_assert!(sol.primal_value <= equal * (1.0 + cfg.dual_tol));
    }

    #[test]
    fn reference_variants_converge(frames in 50usize..=80, speed in 0.0f64..3.0, budget in 8.9e4f64..1.2e5) {
        let Some(s) = reference_variant(frames as f64 / 10.0, [-speed; 3], budget) else { return Ok(()) };
        let cfg = SolverConfig::default();
        let sol = optimize(&s, &cfg).unwrap();
        assert_certified(&s, &sol, &cfg);
        let equal = evaluate(&s, &equal_allocation(&s)).unwrap().mobile_uplink_j.total;
        prop_assert!(sol.primal_value <= equal * (1.0 + cfg.dual_tol));
    }

    #[test]
    fn weak_duality_at_any_multipliers(
        seed in 0u64..1000,
        log_mu in -12.0f64..-2.0,
        a in prop::collection::vec(0.0f64..1e-7, 4),
        b in prop::collection::vec(0.0f64..1e-7, 4),
    ) {
        let s = common::toy(seed, 5);
        let cfg = SolverConfig::default();
        let m = s.usable_slots();
        let d = DualState::new(10f64.powf(log_mu), a[..m].to_vec(), b[..m].to_vec());
        let x = minimizers(&s, &d, &cfg);
        let g = dual_value(&s, &d, &x);
        let equal = evaluate(&s, &equal_allocation(&s)).unwrap().mobile_uplink_j.total;
        prop_assert!(g <= equal * (1.0 + 1e-9), "g {g} equal {equal}");
    }
}

#[test]
fn reference_solution_is_deterministic() {
    let s = reference_scenario();
    let cfg = SolverConfig::default();
    let a = optimize(&s, &cfg).unwrap();
    let b = optimize(&s, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn budget_rescaling_leaves_uplink_unchanged() {
    let cfg = SolverConfig::default();
    // Downlink energy does not scale with the cloudlet constant, so only
    // instances where it is small next to the budget are near-invariant.
    let binding = reference_variant(5.0, [-3.0; 3], 8.8e4).unwrap();
    for s in [reference_scenario(), binding] {
        let base = optimize(&s, &cfg).unwrap();
        let mut scaled = s.clone();
        scaled.devices.gamma_cloudlet *= 10.0;
        scaled.devices.cloudlet_budget_j *= 10.0;
        let other = optimize(&scaled, &cfg).unwrap();
        assert_eq!(other.status, Status::Converged);
        let l = s.application.input_bits;
        for (x, y) in base.allocation.uplink.iter().zip(&other.allocation.uplink) {
            assert!((x - y).abs() <= 1e-3 * l, "{x} vs {y}");
        }
        if base.dual.mu == cfg.mu_min {
            assert!(
                (base.primal_value - other.primal_value).abs()
                    <= 2.0 * cfg.dual_tol * base.primal_value
            );
        }
    }
}

#[test]
fn single_slot_is_forced_with_zero_gap() {
    // The reference task cannot move through a single slot at any budget.
    let mut doc = reference_doc(0.3, [-3.0; 3]);
    doc.application.input_bits = 1e5;
    let s = doc.into_scenario().unwrap();
    let sol = optimize(&s, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, Status::Converged);
    let l = s.application.input_bits;
    assert_eq!(sol.allocation.uplink, vec![l]);
    assert_eq!(sol.allocation.compute, vec![l]);
    assert_eq!(sol.allocation.downlink, vec![0.9 * l]);
    assert!(sol.gap.abs() <= 1e-12 * sol.primal_value);
    assert!(sol.kkt.max_stationarity() <= 1e-10);
}

#[test]
fn impossible_budget_is_infeasible() {
    let mut s = reference_scenario();
    s.devices.cloudlet_budget_j = 1.0;
    let sol = optimize(&s, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
}

#[test]
fn tight_deadlines_are_infeasible() {
    for t in [1.0, 2.0, 3.0, 4.0] {
        let s = reference_doc(t, [-3.0; 3]).into_scenario().unwrap();
        let sol = optimize(&s, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, Status::Infeasible, "T = {t}");
    }
}

#[test]
fn budget_binding_reference_converges() {
    // The unconstrained optimum uses about 88.3 kJ of cloudlet energy.
    let cfg = SolverConfig::default();
    for budget in [8.75e4, 8.8e4] {
        let s = reference_variant(5.0, [-3.0; 3], budget).unwrap();
        let sol = optimize(&s, &cfg).unwrap();
        assert_certified(&s, &sol, &cfg);
        assert!(sol.dual.mu > cfg.mu_min);
        assert!(sol.report.budget_residual_j.abs() <= cfg.dual_tol * budget);
    }
}

#[test]
fn diminishing_rule_keeps_a_monotone_valid_bound() {
    let s = reference_scenario();
    let equal = models::evaluate(&s, &equal_allocation(&s))
        .unwrap()
        .mobile_uplink_j
        .total;
    let mut prev = f64::NEG_INFINITY;
    for k in [1, 10, 100, 1000] {
        let cfg = SolverConfig {
            max_iters: k,
            step_rule: StepRule::Diminishing { c: 1.0 },
            ..SolverConfig::default()
        };
        let sol = optimize(&s, &cfg).unwrap();
        assert!(sol.dual_value >= prev, "k = {k}");
        assert!(sol.dual_value <= equal);
        assert!(sol.dual_value <= sol.primal_value);
        assert!(sol.dual.is_consistent());
        if sol.status == Status::IterLimit {
            assert!(sol.report.max_causality_violation() <= 1e-6 * s.application.input_bits);
        }
        prev = sol.dual_value;
    }
}

#[test]
fn diminishing_rule_certifies_small_instances() {
    let cfg = SolverConfig {
        step_rule: StepRule::Diminishing { c: 1.0 },
        ..SolverConfig::default()
    };
    let s = common::hovering();
    let sol = optimize(&s, &cfg).unwrap();
    assert_certified(&s, &sol, &cfg);
}
