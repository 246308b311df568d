//! Exact causality repair for recovered primal points.

use crate::models::BitAllocation;
use crate::sum::prefix_step;

/// Sweeps the slots in order, clamping each compute entry to the input bits
/// received so far and each downlink entry to `kappa` times the bits
/// computed so far. Clipped bits are carried into the next slot, so totals
/// are preserved whenever the incoming totals are consistent; any excess
/// left after the final slot is dropped. Uplink is never touched.
///
/// The clamps use the same prefix arithmetic as the evaluator, so the
/// result reads back with every causality residual `<= 0`.
pub fn repair_causality(a: &BitAllocation, kappa: f64) -> BitAllocation {
    let compute = clamp_prefix(&a.compute, &a.uplink, 1.0);
    let downlink = clamp_prefix(&a.downlink, &compute, kappa);
    BitAllocation {
        uplink: a.uplink.clone(),
        compute,
        downlink,
    }
}

fn clamp_prefix(wanted: &[f64], available: &[f64], ratio: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut carry = 0.0;
    wanted
        .iter()
        .zip(available)
        .map(|(&w, &have)| {
            let want = w + carry;
            let mut x = if prefix_step(acc, want, have, ratio) <= 0.0 {
                want
            } else {
                (ratio * have - acc).min(want).max(0.0)
            };
            while x > 0.0 && prefix_step(acc, x, have, ratio) > 0.0 {
                x = x.next_down().max(0.0);
            }
            carry = want - x;
            acc = prefix_step(acc, x, have, ratio);
            x
        })
        .collect()
}
