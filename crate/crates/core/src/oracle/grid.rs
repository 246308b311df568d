//! Exhaustive search over allocations whose entries are multiples of a
//! bit grid.

use super::OracleError;
use crate::models::{self, BitAllocation, DOWNLINK_OFFSET, UPLINK_OFFSET};
use crate::scenario::Scenario;

/// Default cap on the number of `(uplink, compute, downlink)` tuples.
pub const DEFAULT_NODE_BUDGET: u128 = 100_000_000;

const MAX_SLOTS: usize = 3;

/// Minimum-mobile-energy allocation on the grid; ties go to the
/// lexicographically smallest `(uplink, compute, downlink)` tuple.
pub fn grid_search(s: &Scenario, grid_bits: f64) -> Result<(BitAllocation, f64), OracleError> {
    grid_search_with_budget(s, grid_bits, DEFAULT_NODE_BUDGET)
}

fn grid_units(total_bits: f64, grid_bits: f64) -> Result<u32, OracleError> {
    let units = total_bits / grid_bits;
    let rounded = units.round();
    if !(grid_bits > 0.0)
        || (units - rounded).abs() > 1e-9 * units.max(1.0)
        || rounded > u32::MAX as f64
    {
        return Err(OracleError::GridMismatch {
            grid_bits,
            total_bits,
        });
    }
    Ok(rounded as u32)
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of ways to write `units` as an ordered sum of `parts` nonnegative integers.
fn count_compositions(units: u32, parts: usize) -> u128 {
    binomial(units as u128 + parts as u128 - 1, parts as u128 - 1)
}

/// All compositions of `units` into `parts` entries, in lexicographic order.
fn compositions(units: u32, parts: usize) -> Vec<Vec<u32>> {
    fn extend(prefix: &mut Vec<u32>, left: u32, parts: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == parts {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            extend(prefix, left - v, parts, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(parts), units, parts, &mut out);
    out
}

/// `sum_{i<=n} lhs_i <= sum_{i<=n} rhs_i` for every prefix, in grid units.
fn dominated(lhs: &[u32], rhs: &[u32]) -> bool {
    let (mut a, mut b) = (0u64, 0u64);
    lhs.iter().zip(rhs).all(|(&x, &y)| {
        a += x as u64;
        b += y as u64;
        a <= b
    })
}

/// Downlink causality checked in bits: `sum d_i <= kappa sum l_i` per prefix.
fn downlink_causal(down: &[u32], compute: &[u32], grid_bits: f64, kappa: f64, slack: f64) -> bool {
    let (mut d, mut l) = (0u64, 0u64);
    down.iter().zip(compute).all(|(&x, &y)| {
        d += x as u64;
        l += y as u64;
        d as f64 * grid_bits <= kappa * (l as f64 * grid_bits) + slack
    })
}

pub fn grid_search_with_budget(
    s: &Scenario,
    grid_bits: f64,
    node_budget: u128,
) -> Result<(BitAllocation, f64), OracleError> {
    let m = s.usable_slots();
    if m == 0 || m > MAX_SLOTS {
        return Err(OracleError::TooManySlots(m));
    }
    let app = &s.application;
    let kappa = app.output_ratio;
    let k_in = grid_units(app.input_bits, grid_bits)?;
    let k_out = grid_units(kappa * app.input_bits, grid_bits)?;
    let nodes = count_compositions(k_in, m).pow(2) * count_compositions(k_out, m);
    if nodes > node_budget {
        return Err(OracleError::TooLarge {
            nodes,
            budget: node_budget,
        });
    }

    let gains = s.gains();
    let slot = s.timing.slot_s;
    let ch = &s.channel;
    let bits = |j: u32| j as f64 * grid_bits;
    let table = |units: u32, gain: f64| -> Vec<f64> {
        (0..=units)
            .map(|j| models::comm_energy(bits(j), gain, ch, slot))
            .collect()
    };
    let up: Vec<Vec<f64>> = (0..m)
        .map(|k| table(k_in, gains[k + UPLINK_OFFSET - 1]))
        .collect();
    let down: Vec<Vec<f64>> = (0..m)
        .map(|k| table(k_out, gains[k + DOWNLINK_OFFSET - 1]))
        .collect();
    let comp: Vec<f64> = (0..=k_in)
        .map(|j| {
            models::comp_energy_slot(bits(j), s.devices.gamma_cloudlet, app.cycles_per_bit, slot)
        })
        .collect();
    let budget = s.devices.cloudlet_budget_j;
    let slack = 1e-9 * app.input_bits;

    let inputs = compositions(k_in, m);
    let outputs = compositions(k_out, m);
    let to_bits = |v: &[u32]| v.iter().map(|&j| bits(j)).collect::<Vec<f64>>();

    let mut best: Option<(f64, BitAllocation)> = None;
    for u in &inputs {
        let e_up: f64 = u.iter().enumerate().map(|(k, &j)| up[k][j as usize]).sum();
        // Enumeration is lexicographic, so an equal energy seen earlier wins.
        if best.as_ref().is_some_and(|(e, _)| e_up >= *e) {
            continue;
        }
        let mut found = None;
        'search: for l in inputs.iter().filter(|l| dominated(l, u)) {
            let e_comp: f64 = l.iter().map(|&j| comp[j as usize]).sum();
            if e_comp > budget {
                continue;
            }
            for d in outputs
                .iter()
                .filter(|d| downlink_causal(d, l, grid_bits, kappa, slack))
            {
                let e_down: f64 = d
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| down[k][j as usize])
                    .sum();
                if e_comp + e_down > budget {
                    continue;
                }
                let alloc = BitAllocation {
                    uplink: to_bits(u),
                    compute: to_bits(l),
                    downlink: to_bits(d),
                };
                let report = models::evaluate(s, &alloc)?;
                if report.budget_residual_j <= 0.0 && !report.overflow {
                    found = Some((report.mobile_uplink_j.total, alloc));
                    break 'search;
                }
            }
        }
        if let Some(hit) = found {
            best = Some(hit);
        }
    }
    best.map(|(e, a)| (a, e))
        .ok_or(OracleError::NoFeasiblePoint)
}

/// Largest increase in mobile energy from adding one grid step to a single
/// uplink entry of `alloc`: the energy resolution of a grid solution.
pub fn grid_step_energy(s: &Scenario, alloc: &BitAllocation, grid_bits: f64) -> f64 {
    let gains = s.gains();
    let slot = s.timing.slot_s;
    alloc
        .uplink
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let h = gains[k + UPLINK_OFFSET - 1];
            models::comm_energy(u + grid_bits, h, &s.channel, slot)
                - models::comm_energy(u, h, &s.channel, slot)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(
            compositions(3, 2),
            vec![vec![0, 3], vec![1, 2], vec![2, 1], vec![3, 0]]
        );
        assert_eq!(compositions(20, 3).len() as u128, count_compositions(20, 3));
        assert_eq!(count_compositions(7, 1), 1);
    }

    #[test]
    fn prefix_domination() {
        assert!(!dominated(&[1, 2, 0], &[1, 1, 1]));
        assert!(dominated(&[0, 2, 1], &[1, 1, 1]));
    }

    #[test]
    fn grid_must_divide_totals() {
        assert!(grid_units(100_000.0, 5_000.0).is_ok());
        assert!(matches!(
            grid_units(100_000.0, 3_000.0),
            Err(OracleError::GridMismatch { .. })
        ));
    }
}
