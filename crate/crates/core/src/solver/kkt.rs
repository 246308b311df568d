//! Stationarity and complementary-slackness residuals of a solution.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::dual::{subgradients_with_gains, DualState};
use super::Solution;
use crate::models::{BitAllocation, DOWNLINK_OFFSET, UPLINK_OFFSET};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktSummary {
    /// Largest normalized uplink stationarity residual over active slots.
    pub uplink_stationarity: f64,
    pub compute_stationarity: f64,
    pub downlink_stationarity: f64,
    /// `|mu * s_mu|`, J.
    pub budget_slackness: f64,
    /// `max_n |a_n * s_a[n]|`, J.
    pub uplink_causality_slackness: f64,
    /// `max_n |b_n * s_b[n]|`, J.
    pub downlink_causality_slackness: f64,
}

impl KktSummary {
    pub fn max_stationarity(&self) -> f64 {
        self.uplink_stationarity
            .max(self.compute_stationarity)
            .max(self.downlink_stationarity)
    }
}

/// Inner multipliers that pin the three equality totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualityMultipliers {
    pub lambda: f64,
    pub nu: f64,
    pub eta: f64,
}

/// Bits per unit of `L` below which a slot is treated as inactive.
pub const DUST_REL: f64 = 1e-8;

/// `|sum of terms| / max |term|`, or 0 when every term vanishes.
fn normalized(terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if scale == 0.0 {
        0.0
    } else {
        terms.iter().sum::<f64>().abs() / scale
    }
}

pub fn kkt_residuals(s: &Scenario, sol: &Solution) -> KktSummary {
    kkt_for(s, &s.gains(), &sol.allocation, &sol.dual, &sol.multipliers)
}

pub(crate) fn kkt_for(
    s: &Scenario,
    gains: &[f64],
    alloc: &BitAllocation,
    d: &DualState,
    eq: &EqualityMultipliers,
) -> KktSummary {
    let ch = &s.channel;
    let slot = s.timing.slot_s;
    let bd = ch.bandwidth_hz * slot;
    let app = &s.application;
    let kappa = app.output_ratio;
    let c3 = app.cycles_per_bit.powi(3);
    // Allocations this small are indistinguishable from zero at any
    // feasibility tolerance; their slots count as inactive.
    let dust = DUST_REL * app.input_bits;
    let curv = 3.0 * d.mu * s.devices.gamma_cloudlet * c3 / (slot * slot);

    let mut up = 0.0f64;
    let mut comp = 0.0f64;
    let mut down = 0.0f64;
    for i in 0..alloc.len() {
        let u = alloc.uplink[i];
        if u > dust {
            let h = gains[i + UPLINK_OFFSET - 1];
            let marginal = ch.noise_psd * LN_2 / h * (u / bd).exp2();
            up = up.max(normalized(&[marginal, -d.alpha[i], -eq.lambda]));
        }
        let l = alloc.compute[i];
        if l > dust {
            comp = comp.max(normalized(&[
                curv * l * l,
                d.alpha[i],
                -kappa * d.beta[i],
                -eq.nu,
            ]));
        }
        let dl = alloc.downlink[i];
        if dl > dust {
            let h = gains[i + DOWNLINK_OFFSET - 1];
            let marginal = d.mu * ch.noise_psd * LN_2 / h * (dl / bd).exp2();
            down = down.max(normalized(&[marginal, d.beta[i], -eq.eta]));
        }
    }

    let g = subgradients_with_gains(s, gains, alloc);
    let slack = |m: &[f64], r: &[f64]| {
        m.iter()
            .zip(r)
            .fold(0.0f64, |acc, (x, y)| acc.max((x * y).abs()))
    };
    KktSummary {
        uplink_stationarity: up,
        compute_stationarity: comp,
        downlink_stationarity: down,
        budget_slackness: (d.mu * g.mu).abs(),
        uplink_causality_slackness: slack(&d.a, &g.a),
        downlink_causality_slackness: slack(&d.b, &g.b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::equal_allocation;
    use crate::scenario::{reference_doc, reference_scenario};

    #[test]
    fn single_slot_closed_form_is_stationary() {
        let s = reference_doc(0.3, [-3.0; 3]).into_scenario().unwrap();
        let gains = s.gains();
        let alloc = equal_allocation(&s);
        let d = DualState::zeros(1e-3, 1);
        let ch = &s.channel;
        let bd = ch.bandwidth_hz * s.timing.slot_s;
        let l = s.application.input_bits;
        let eq = EqualityMultipliers {
            lambda: ch.noise_psd * LN_2 / gains[0] * (l / bd).exp2(),
            nu: 3.0 * 1e-3 * 1e-28 * 1550.7f64.powi(3) / 2.5e-3f64.powi(2) * l * l,
            eta: 1e-3 * ch.noise_psd * LN_2 / gains[2] * (0.9 * l / bd).exp2(),
        };
        let k = kkt_for(&s, &gains, &alloc, &d, &eq);
        assert!(k.max_stationarity() <= 1e-10, "{k:?}");
    }

    #[test]
    fn equal_split_on_moving_uav_not_stationary() {
        let s = reference_scenario();
        let gains = s.gains();
        let alloc = equal_allocation(&s);
        let d = DualState::zeros(1e-3, 48);
        let ch = &s.channel;
        let bd = ch.bandwidth_hz * s.timing.slot_s;
        let lambda = ch.noise_psd * LN_2 / gains[0] * (312_500.0 / bd).exp2();
        let eq = EqualityMultipliers {
            lambda,
            nu: 0.0,
            eta: 0.0,
        };
        let k = kkt_for(&s, &gains, &alloc, &d, &eq);
        assert!(k.uplink_stationarity > 0.1);
    }
}
