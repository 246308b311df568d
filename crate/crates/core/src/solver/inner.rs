//! Closed-form minimizers of the three per-block subproblems.
//!
//! Each block has the same shape: slot `k` switches on once the block's
//! equality multiplier `theta` exceeds an activation level `a_k`, and then
//! carries `psi_k(theta - a_k)` bits with `psi_k` increasing from zero. The
//! multiplier is pinned by bisection so the block total is met.

use std::f64::consts::LN_2;

use super::bisect::bisect;
use super::{SolverConfig, SolverError};
use crate::scenario::Channel;

/// Minimizer of one block and its equality multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolution {
    pub bits: Vec<f64>,
    pub multiplier: f64,
}

/// Generic clamped water-filling over slots.
///
/// `levels[k]` is the multiplier value at which slot `k` switches on and
/// `psi(k, excess)` the bits carried at `excess = theta - levels[k] > 0`.
fn water_fill<F>(
    target: f64,
    levels: &[f64],
    psi: F,
    width_hint: f64,
    cfg: &SolverConfig,
) -> Result<BlockSolution, SolverError>
where
    F: Fn(usize, f64) -> f64,
{
    let base = levels.iter().copied().fold(f64::INFINITY, f64::min);
    if levels.is_empty() || !base.is_finite() {
        return Err(SolverError::NonFinite("activation levels"));
    }
    let gaps: Vec<f64> = levels.iter().map(|&a| a - base).collect();
    let alloc = |x: f64| -> Vec<f64> {
        gaps.iter()
            .enumerate()
            .map(|(k, &d)| {
                let e = x - d;
                if e > 0.0 {
                    psi(k, e)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let total = |x: f64| alloc(x).iter().sum::<f64>();

    let tol = cfg.bisection_tol_bits(target.max(0.0));
    let x = bisect(
        target,
        total,
        0.0,
        width_hint,
        tol,
        cfg.bisection_max_expand,
    )?;
    Ok(BlockSolution {
        bits: alloc(x),
        multiplier: base + x,
    })
}

/// Uplink block: `L_n = [B slot log2(h_n (lambda + alpha_n) / (N0 ln 2))]^+`
/// with `lambda` chosen so the entries sum to `total_bits`.
pub fn solve_uplink(
    alpha: &[f64],
    gains: &[f64],
    channel: &Channel,
    slot_s: f64,
    total_bits: f64,
    cfg: &SolverConfig,
) -> Result<BlockSolution, SolverError> {
    let thresholds: Vec<f64> = gains
        .iter()
        .map(|&h| channel.noise_psd * LN_2 / h)
        .collect();
    // lambda + alpha_n must exceed N0 ln2 / h_n for slot n to carry bits.
    let levels: Vec<f64> = thresholds.iter().zip(alpha).map(|(&t, &a)| t - a).collect();
    log_block(
        total_bits,
        &levels,
        &thresholds,
        channel.bandwidth_hz * slot_s,
        cfg,
    )
}

/// Downlink block: `L_n = [B slot log2(h_n (eta - beta_n) / (mu N0 ln 2))]^+`
/// with `eta` chosen so the entries sum to `total_bits`.
pub fn solve_downlink(
    mu: f64,
    beta: &[f64],
    gains: &[f64],
    channel: &Channel,
    slot_s: f64,
    total_bits: f64,
    cfg: &SolverConfig,
) -> Result<BlockSolution, SolverError> {
    let mu = mu.max(cfg.mu_min);
    let thresholds: Vec<f64> = gains
        .iter()
        .map(|&h| mu * channel.noise_psd * LN_2 / h)
        .collect();
    let levels: Vec<f64> = thresholds.iter().zip(beta).map(|(&t, &b)| t + b).collect();
    log_block(
        total_bits,
        &levels,
        &thresholds,
        channel.bandwidth_hz * slot_s,
        cfg,
    )
}

fn log_block(
    total_bits: f64,
    levels: &[f64],
    thresholds: &[f64],
    bits_per_use: f64,
    cfg: &SolverConfig,
) -> Result<BlockSolution, SolverError> {
    let m = levels.len();
    let lead = levels
        .iter()
        .enumerate()
        .fold(0, |best, (k, &a)| if a < levels[best] { k } else { best });
    // Excess that gives every slot an equal share when all levels coincide.
    let share = total_bits / m as f64 / bits_per_use;
    let hint = thresholds[lead] * (share * LN_2).exp_m1().max(1e-12);
    water_fill(
        total_bits,
        levels,
        |k, e| bits_per_use * (e / thresholds[k]).ln_1p() / LN_2,
        hint,
        cfg,
    )
}

/// Compute block: `l_n = sqrt(slot^2 / (3 mu gamma C^3) [nu - alpha_n + kappa beta_n]^+)`
/// with `nu` chosen so the entries sum to `total_bits`.
#[allow(clippy::too_many_arguments)]
pub fn solve_compute(
    mu: f64,
    alpha: &[f64],
    beta: &[f64],
    kappa: f64,
    gamma: f64,
    cycles_per_bit: f64,
    slot_s: f64,
    total_bits: f64,
    cfg: &SolverConfig,
) -> Result<BlockSolution, SolverError> {
    let mu = mu.max(cfg.mu_min);
    let c3 = cycles_per_bit * cycles_per_bit * cycles_per_bit;
    let q = slot_s * slot_s / (3.0 * mu * gamma * c3);
    let levels: Vec<f64> = alpha
        .iter()
        .zip(beta)
        .map(|(&a, &b)| a - kappa * b)
        .collect();
    let share = total_bits / levels.len() as f64;
    let hint = (share * share / q).max(f64::MIN_POSITIVE);
    water_fill(total_bits, &levels, |_, e| (q * e).sqrt(), hint, cfg)
}
