//! Dual state, subgradients and the dual function value.

use serde::{Deserialize, Serialize};

use crate::models::{self, BitAllocation};
use crate::scenario::Scenario;
use crate::sum::neumaier_sum;

/// Multipliers of the budget (`mu`) and the two causality families
/// (`a`, `b`), with the suffix sums `alpha_n = sum_{i>=n} a_i` and
/// `beta_n = sum_{i>=n} b_i` that appear in the subproblems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub mu: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl DualState {
    pub fn new(mu: f64, a: Vec<f64>, b: Vec<f64>) -> Self {
        let alpha = suffix_sums(&a);
        let beta = suffix_sums(&b);
        Self {
            mu,
            a,
            b,
            alpha,
            beta,
        }
    }

    pub fn zeros(mu: f64, len: usize) -> Self {
        Self::new(mu, vec![0.0; len], vec![0.0; len])
    }

    /// True when `alpha`/`beta` match the suffix sums of `a`/`b` to
    /// rounding and every multiplier is nonnegative.
    pub fn is_consistent(&self) -> bool {
        let close = |x: &[f64], y: &[f64]| {
            x.len() == y.len()
                && x.iter().zip(y).all(|(p, q)| {
                    (p - q).abs() <= 1e-12 * p.abs().max(q.abs()).max(f64::MIN_POSITIVE)
                })
        };
        self.mu >= 0.0
            && self.a.iter().chain(&self.b).all(|&v| v >= 0.0)
            && close(&self.alpha, &suffix_sums(&self.a))
            && close(&self.beta, &suffix_sums(&self.b))
    }
}

pub fn suffix_sums(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut acc = 0.0;
    for i in (0..v.len()).rev() {
        acc += v[i];
        out[i] = acc;
    }
    out
}

/// Subgradient of the dual function with respect to `(mu, a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgradient {
    /// Cloudlet energy minus budget, J.
    pub mu: f64,
    /// `sum_{i<=n} (compute_i - uplink_i)`, bits.
    pub a: Vec<f64>,
    /// `sum_{i<=n} (downlink_i - kappa compute_i)`, bits.
    pub b: Vec<f64>,
}

pub fn subgradients(s: &Scenario, a: &BitAllocation) -> Subgradient {
    subgradients_with_gains(s, &s.gains(), a)
}

pub(crate) fn subgradients_with_gains(
    s: &Scenario,
    gains: &[f64],
    alloc: &BitAllocation,
) -> Subgradient {
    let (compute_j, downlink_j) = cloudlet_energies(s, gains, alloc);
    Subgradient {
        mu: neumaier_sum(
            compute_j
                .into_iter()
                .chain(downlink_j)
                .chain([-s.devices.cloudlet_budget_j]),
        ),
        a: models::causality_residuals(&alloc.compute, &alloc.uplink, 1.0),
        b: models::causality_residuals(&alloc.downlink, &alloc.compute, s.application.output_ratio),
    }
}

fn cloudlet_energies(s: &Scenario, gains: &[f64], alloc: &BitAllocation) -> (Vec<f64>, Vec<f64>) {
    let app = &s.application;
    let slot = s.timing.slot_s;
    let compute = alloc
        .compute
        .iter()
        .map(|&l| models::comp_energy_slot(l, s.devices.gamma_cloudlet, app.cycles_per_bit, slot))
        .collect();
    let downlink = alloc
        .downlink
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            models::comm_energy(d, gains[i + models::DOWNLINK_OFFSET - 1], &s.channel, slot)
        })
        .collect();
    (compute, downlink)
}

/// Partial Lagrangian at `(alloc, d)`; equals the dual function when
/// `alloc` is the subproblem minimizer at `d`.
pub fn dual_value(s: &Scenario, d: &DualState, alloc: &BitAllocation) -> f64 {
    dual_value_with_gains(s, &s.gains(), d, alloc)
}

pub(crate) fn dual_value_with_gains(
    s: &Scenario,
    gains: &[f64],
    d: &DualState,
    alloc: &BitAllocation,
) -> f64 {
    let slot = s.timing.slot_s;
    let kappa = s.application.output_ratio;
    let uplink_j = alloc.uplink.iter().enumerate().map(|(i, &u)| {
        models::comm_energy(u, gains[i + models::UPLINK_OFFSET - 1], &s.channel, slot)
    });
    let (compute_j, downlink_j) = cloudlet_energies(s, gains, alloc);
    let budget = neumaier_sum(
        compute_j
            .into_iter()
            .chain(downlink_j)
            .chain([-s.devices.cloudlet_budget_j]),
    );
    let linear = (0..alloc.len()).flat_map(|i| {
        [
            -d.alpha[i] * alloc.uplink[i],
            (d.alpha[i] - kappa * d.beta[i]) * alloc.compute[i],
            d.beta[i] * alloc.downlink[i],
        ]
    });
    neumaier_sum(uplink_j.chain([d.mu * budget]).chain(linear))
}
