//! Energy models for transmission and computation, the two baselines, and
//! the evaluator that scores a bit allocation against every constraint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Channel, Scenario, Vec3};
use crate::sum::{neumaier_sum, running_difference};

/// Largest `bits / (B * slot)` exponent evaluated before the transmit
/// energy is reported as infinite.
pub const DEFAULT_EXPONENT_CAP: f64 = 1024.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("path loss is unbounded for a UAV at the mobile position {0:?}")]
    DegeneratePosition(Vec3),
    #[error("allocation length mismatch: expected {expected} entries per sequence, got uplink {uplink}, compute {compute}, downlink {downlink}")]
    LengthMismatch {
        expected: usize,
        uplink: usize,
        compute: usize,
        downlink: usize,
    },
}

/// Inverse-square line-of-sight gain `h0 / |p|^2` for a mobile at the origin.
pub fn path_loss(position: Vec3, ref_gain: f64) -> Result<f64, ModelError> {
    let r2 = position[0] * position[0] + position[1] * position[1] + position[2] * position[2];
    if r2 > 0.0 {
        Ok(ref_gain / r2)
    } else {
        Err(ModelError::DegeneratePosition(position))
    }
}

/// Energy to push `bits` through one slot of length `slot_s` at gain `gain`,
/// inverted from the Shannon rate: `(2^(bits/(B slot)) - 1) N0 B slot / h`.
///
/// Returns `f64::INFINITY` once the exponent exceeds [`DEFAULT_EXPONENT_CAP`].
pub fn comm_energy(bits: f64, gain: f64, channel: &Channel, slot_s: f64) -> f64 {
    comm_energy_capped(bits, gain, channel, slot_s, DEFAULT_EXPONENT_CAP)
}

pub fn comm_energy_capped(
    bits: f64,
    gain: f64,
    channel: &Channel,
    slot_s: f64,
    exponent_cap: f64,
) -> f64 {
    let bd = channel.bandwidth_hz * slot_s;
    let x = bits / bd;
    if x > exponent_cap {
        return f64::INFINITY;
    }
    // exp_m1 keeps precision for small bit counts.
    (x * std::f64::consts::LN_2).exp_m1() * channel.noise_psd * bd / gain
}

/// Cloudlet compute energy for `bits` processed within one slot with the
/// CPU clocked at the minimum sufficient frequency: `gamma C^3 l^3 / slot^2`.
pub fn comp_energy_slot(bits: f64, gamma: f64, cycles_per_bit: f64, slot_s: f64) -> f64 {
    let cycles = cycles_per_bit * bits;
    gamma * cycles * cycles * cycles / (slot_s * slot_s)
}

/// Clock needed to process `bits` within `window_s`.
pub fn cpu_frequency(bits: f64, cycles_per_bit: f64, window_s: f64) -> f64 {
    cycles_per_bit * bits / window_s
}

/// Dynamic CPU energy for `bits` processed at frequency `freq_hz`:
/// `C gamma f^2 l`.
pub fn cpu_energy(bits: f64, freq_hz: f64, gamma: f64, cycles_per_bit: f64) -> f64 {
    cycles_per_bit * gamma * freq_hz * freq_hz * bits
}

/// Energy of running the whole application on the mobile within the
/// deadline, `gamma_m C^3 L^3 / T^2`.
pub fn mobile_execution_energy(s: &Scenario) -> f64 {
    let app = &s.application;
    let t = s.timing.deadline_s;
    let cycles = app.cycles_per_bit * app.input_bits;
    s.devices.gamma_mobile * cycles * cycles * cycles / (t * t)
}

/// Per-slot bit sequences, each of length `N - 2`.
///
/// Entry `i` (0-based) of `uplink` is transmitted in slot `i + 1`, of
/// `compute` processed in slot `i + 2`, and of `downlink` returned in slot
/// `i + 3` (slots are 1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAllocation {
    pub uplink: Vec<f64>,
    pub compute: Vec<f64>,
    pub downlink: Vec<f64>,
}

pub const UPLINK_OFFSET: usize = 1;
pub const COMPUTE_OFFSET: usize = 2;
pub const DOWNLINK_OFFSET: usize = 3;

impl BitAllocation {
    pub fn zeros(len: usize) -> Self {
        Self {
            uplink: vec![0.0; len],
            compute: vec![0.0; len],
            downlink: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.uplink.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uplink.is_empty()
    }

    fn check_len(&self, expected: usize) -> Result<(), ModelError> {
        if self.uplink.len() == expected
            && self.compute.len() == expected
            && self.downlink.len() == expected
        {
            Ok(())
        } else {
            Err(ModelError::LengthMismatch {
                expected,
                uplink: self.uplink.len(),
                compute: self.compute.len(),
                downlink: self.downlink.len(),
            })
        }
    }
}

/// The equal-split baseline: `L/(N-2)` bits uplinked and computed per slot,
/// `kappa L/(N-2)` returned.
pub fn equal_allocation(s: &Scenario) -> BitAllocation {
    let m = s.usable_slots();
    let share = s.application.input_bits / m as f64;
    let out = s.application.output_ratio * share;
    BitAllocation {
        uplink: vec![share; m],
        compute: vec![share; m],
        downlink: vec![out; m],
    }
}

/// Values indexed by 1-based slot, with their compensated sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSeries {
    pub slots: Vec<usize>,
    pub values: Vec<f64>,
    pub total: f64,
}

impl SlotSeries {
    pub fn new(first_slot: usize, values: Vec<f64>) -> Self {
        let total = neumaier_sum(values.iter().copied());
        Self {
            slots: (first_slot..first_slot + values.len()).collect(),
            values,
            total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalsResiduals {
    /// `sum(uplink) - L`.
    pub uplink: f64,
    /// `sum(compute) - L`.
    pub compute: f64,
    /// `sum(downlink) - kappa L`.
    pub downlink: f64,
}

impl TotalsResiduals {
    pub fn max_abs(&self) -> f64 {
        self.uplink
            .abs()
            .max(self.compute.abs())
            .max(self.downlink.abs())
    }
}

/// Energies and constraint residuals of one allocation.
///
/// Causality residuals are indexed by prefix length `n = 1..=N-2`; a
/// positive entry means the constraint for that prefix is violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub mobile_uplink_j: SlotSeries,
    pub cloudlet_compute_j: SlotSeries,
    pub cloudlet_downlink_j: SlotSeries,
    pub cloudlet_total_j: f64,
    pub budget_residual_j: f64,
    pub causality_residuals_uplink: SlotSeries,
    pub causality_residuals_downlink: SlotSeries,
    pub totals_residuals: TotalsResiduals,
    pub cpu_freqs_hz: SlotSeries,
    /// Set when some transmit energy exceeded the exponent cap.
    pub overflow: bool,
}

impl EnergyReport {
    pub fn max_causality_violation(&self) -> f64 {
        self.causality_residuals_uplink
            .values
            .iter()
            .chain(&self.causality_residuals_downlink.values)
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Prefix residuals `sum_{i<=n} (lhs_i - ratio * rhs_i)`.
pub fn causality_residuals(lhs: &[f64], rhs: &[f64], ratio: f64) -> Vec<f64> {
    running_difference(lhs, rhs, ratio)
}

/// Scores `a` against the scenario: per-slot energies with the slot-aligned
/// path loss, the cloudlet budget, causality and totals residuals.
pub fn evaluate(s: &Scenario, a: &BitAllocation) -> Result<EnergyReport, ModelError> {
    let gains = s.gains();
    evaluate_with_gains(s, &gains, a)
}

pub(crate) fn evaluate_with_gains(
    s: &Scenario,
    gains: &[f64],
    a: &BitAllocation,
) -> Result<EnergyReport, ModelError> {
    let m = s.usable_slots();
    a.check_len(m)?;
    let app = &s.application;
    let ch = &s.channel;
    let slot = s.timing.slot_s;
    let gamma_c = s.devices.gamma_cloudlet;

    let uplink_j: Vec<f64> = (0..m)
        .map(|i| comm_energy(a.uplink[i], gains[i + UPLINK_OFFSET - 1], ch, slot))
        .collect();
    let compute_j: Vec<f64> = a
        .compute
        .iter()
        .map(|&l| comp_energy_slot(l, gamma_c, app.cycles_per_bit, slot))
        .collect();
    let downlink_j: Vec<f64> = (0..m)
        .map(|i| comm_energy(a.downlink[i], gains[i + DOWNLINK_OFFSET - 1], ch, slot))
        .collect();
    let freqs: Vec<f64> = a
        .compute
        .iter()
        .map(|&l| cpu_frequency(l, app.cycles_per_bit, slot))
        .collect();

    let overflow = uplink_j.iter().chain(&downlink_j).any(|e| e.is_infinite());
    let mobile = SlotSeries::new(UPLINK_OFFSET, uplink_j);
    let compute = SlotSeries::new(COMPUTE_OFFSET, compute_j);
    let downlink = SlotSeries::new(DOWNLINK_OFFSET, downlink_j);
    let cloudlet_total_j = neumaier_sum([compute.total, downlink.total]);
    let budget_residual_j = cloudlet_total_j - s.devices.cloudlet_budget_j;

    let l = app.input_bits;
    let kappa = app.output_ratio;
    let totals_residuals = TotalsResiduals {
        uplink: neumaier_sum(a.uplink.iter().copied().chain([-l])),
        compute: neumaier_sum(a.compute.iter().copied().chain([-l])),
        downlink: neumaier_sum(a.downlink.iter().copied().chain([-kappa * l])),
    };

    Ok(EnergyReport {
        mobile_uplink_j: mobile,
        cloudlet_compute_j: compute,
        cloudlet_downlink_j: downlink,
        cloudlet_total_j,
        budget_residual_j,
        causality_residuals_uplink: SlotSeries::new(
            1,
            causality_residuals(&a.compute, &a.uplink, 1.0),
        ),
        causality_residuals_downlink: SlotSeries::new(
            1,
            causality_residuals(&a.downlink, &a.compute, kappa),
        ),
        totals_residuals,
        cpu_freqs_hz: SlotSeries::new(COMPUTE_OFFSET, freqs),
        overflow,
    })
}
