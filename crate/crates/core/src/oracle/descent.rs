//! Penalized projected gradient descent on the primal problem.
//!
//! Each of the uplink, compute and downlink sequences lives on a scaled
//! simplex, so the totals hold by construction. The budget and the two
//! causality families enter as quadratic penalties whose weight grows
//! geometrically. The final point is made causal by a forward clamp and
//! then pulled toward the feasible start along a segment until the budget
//! holds, so the returned allocation is always feasible.

use std::f64::consts::LN_2;

use super::OracleError;
use crate::models::{self, BitAllocation, DOWNLINK_OFFSET, UPLINK_OFFSET};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    /// Relative objective change that ends one penalty round.
    pub tol_rel: f64,
    pub max_iters_per_round: usize,
    pub penalty_start: f64,
    pub penalty_growth: f64,
    pub penalty_rounds: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            tol_rel: 1e-4,
            max_iters_per_round: 20_000,
            penalty_start: 1e2,
            penalty_growth: 10.0,
            penalty_rounds: 9,
        }
    }
}

/// Euclidean projection onto `{x >= 0, sum x = total}`.
fn project_simplex(y: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - total) / (i + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    y.iter().map(|&v| (v - shift).max(0.0)).collect()
}

/// Penalized objective over normalized sequences (fractions of each total).
struct Penalized<'a> {
    s: &'a Scenario,
    m: usize,
    up_gain: Vec<f64>,
    down_gain: Vec<f64>,
    input: f64,
    output: f64,
    /// Mobile energy of the start, used to normalize the objective.
    reference_j: f64,
}

impl Penalized<'_> {
    fn to_bits(&self, x: &[f64]) -> BitAllocation {
        let m = self.m;
        BitAllocation {
            uplink: x[..m].iter().map(|v| v * self.input).collect(),
            compute: x[m..2 * m].iter().map(|v| v * self.input).collect(),
            downlink: x[2 * m..].iter().map(|v| v * self.output).collect(),
        }
    }

    fn from_bits(&self, a: &BitAllocation) -> Vec<f64> {
        let out = if self.output > 0.0 { self.output } else { 1.0 };
        a.uplink
            .iter()
            .map(|v| v / self.input)
            .chain(a.compute.iter().map(|v| v / self.input))
            .chain(a.downlink.iter().map(|v| v / out))
            .collect()
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = project_simplex(&y[..m], 1.0);
        out.extend(project_simplex(&y[m..2 * m], 1.0));
        if self.output > 0.0 {
            out.extend(project_simplex(&y[2 * m..], 1.0));
        } else {
            out.extend(std::iter::repeat_n(0.0, m));
        }
        out
    }

    /// Value and gradient at `x` with penalty weight `rho`.
    fn eval(&self, x: &[f64], rho: f64) -> (f64, Vec<f64>) {
        let s = self.s;
        let m = self.m;
        let ch = &s.channel;
        let slot = s.timing.slot_s;
        let bd = ch.bandwidth_hz * slot;
        let app = &s.application;
        let kappa = app.output_ratio;
        let e0 = s.devices.cloudlet_budget_j;
        let c3 = app.cycles_per_bit.powi(3);
        let gamma = s.devices.gamma_cloudlet;
        let a = self.to_bits(x);

        let mut grad = vec![0.0; 3 * m];
        let mut mobile = 0.0;
        let mut cloud = 0.0;
        let mut cloud_grad = vec![0.0; 3 * m];
        for k in 0..m {
            let u = a.uplink[k];
            mobile += models::comm_energy(u, self.up_gain[k], ch, slot);
            grad[k] = ch.noise_psd * LN_2 / self.up_gain[k] * (u / bd).exp2() * self.input
                / self.reference_j;

            let l = a.compute[k];
            cloud += models::comp_energy_slot(l, gamma, app.cycles_per_bit, slot);
            cloud_grad[m + k] = 3.0 * gamma * c3 * l * l / (slot * slot) * self.input;

            let d = a.downlink[k];
            cloud += models::comm_energy(d, self.down_gain[k], ch, slot);
            cloud_grad[2 * m + k] =
                ch.noise_psd * LN_2 / self.down_gain[k] * (d / bd).exp2() * self.output;
        }
        let mut value = mobile / self.reference_j;

        let over = ((cloud - e0) / e0).max(0.0);
        value += 0.5 * rho * over * over;
        for (g, cg) in grad.iter_mut().zip(&cloud_grad) {
            *g += rho * over * cg / e0;
        }

        // Prefix violations in units of the input size.
        let scale = self.input;
        let (mut up_acc, mut down_acc) = (0.0, 0.0);
        let mut up_v = vec![0.0; m];
        let mut down_v = vec![0.0; m];
        for k in 0..m {
            up_acc += a.compute[k] - a.uplink[k];
            down_acc += a.downlink[k] - kappa * a.compute[k];
            up_v[k] = (up_acc / scale).max(0.0);
            down_v[k] = (down_acc / scale).max(0.0);
            value += 0.5 * rho * (up_v[k] * up_v[k] + down_v[k] * down_v[k]);
        }
        let (mut up_tail, mut down_tail) = (0.0, 0.0);
        for k in (0..m).rev() {
            up_tail += up_v[k];
            down_tail += down_v[k];
            grad[k] -= rho * up_tail * self.input / scale;
            grad[m + k] += rho * (up_tail - kappa * down_tail) * self.input / scale;
            grad[2 * m + k] += rho * down_tail * self.output / scale;
        }
        (value, grad)
    }
}

/// Forward clamp of compute to received bits and downlink to computed bits,
/// carrying clipped bits into later slots.
fn clamp_forward(a: &BitAllocation, kappa: f64) -> BitAllocation {
    fn clamp(wanted: &[f64], available: &[f64], ratio: f64) -> Vec<f64> {
        let (mut have, mut used, mut carry) = (0.0, 0.0, 0.0);
        wanted
            .iter()
            .zip(available)
            .map(|(&w, &h)| {
                have += ratio * h;
                let x = (w + carry).min(have - used).max(0.0);
                carry += w - x;
                used += x;
                x
            })
            .collect()
    }
    let compute = clamp(&a.compute, &a.uplink, 1.0);
    let downlink = clamp(&a.downlink, &compute, kappa);
    BitAllocation {
        uplink: a.uplink.clone(),
        compute,
        downlink,
    }
}

fn blend(x: &BitAllocation, y: &BitAllocation, theta: f64) -> BitAllocation {
    let mix = |p: &[f64], q: &[f64]| {
        p.iter()
            .zip(q)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect()
    };
    BitAllocation {
        uplink: mix(&x.uplink, &y.uplink),
        compute: mix(&x.compute, &y.compute),
        downlink: mix(&x.downlink, &y.downlink),
    }
}

/// Starts from the equal allocation, which must meet the budget.
pub fn primal_descent(
    s: &Scenario,
    cfg: &DescentConfig,
) -> Result<(BitAllocation, f64), OracleError> {
    let start = models::equal_allocation(s);
    let start_report = models::evaluate(s, &start)?;
    if start_report.budget_residual_j > 0.0 {
        return Err(OracleError::InfeasibleStart {
            candidate: start,
            excess_j: start_report.budget_residual_j,
        });
    }
    let m = s.usable_slots();
    let gains = s.gains();
    let app = &s.application;
    let problem = Penalized {
        s,
        m,
        up_gain: gains[UPLINK_OFFSET - 1..UPLINK_OFFSET - 1 + m].to_vec(),
        down_gain: gains[DOWNLINK_OFFSET - 1..DOWNLINK_OFFSET - 1 + m].to_vec(),
        input: app.input_bits,
        output: app.output_ratio * app.input_bits,
        reference_j: start_report.mobile_uplink_j.total.max(f64::MIN_POSITIVE),
    };

    let mut x = problem.from_bits(&start);
    let mut rho = cfg.penalty_start;
    for _ in 0..cfg.penalty_rounds {
        x = descend(&problem, x, rho, cfg);
        rho *= cfg.penalty_growth;
    }

    let raw = clamp_forward(&problem.to_bits(&x), app.output_ratio);
    let feasible = |a: &BitAllocation| -> Result<bool, OracleError> {
        let r = models::evaluate(s, a)?;
        let tol = 1e-6 * app.input_bits;
        Ok(r.budget_residual_j <= 0.0
            && r.max_causality_violation() <= tol
            && r.totals_residuals.max_abs() <= tol
            && !r.overflow)
    };
    let result = if feasible(&raw)? {
        raw
    } else {
        // The segment from the start is feasible near the start by convexity.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(&blend(&raw, &start, mid))? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        blend(&raw, &start, hi)
    };
    let energy = models::evaluate(s, &result)?.mobile_uplink_j.total;
    Ok((result, energy))
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Spectral projected gradient with backtracking at a fixed penalty weight.
fn descend(p: &Penalized, mut x: Vec<f64>, rho: f64, cfg: &DescentConfig) -> Vec<f64> {
    let (mut f, mut g) = p.eval(&x, rho);
    let mut step = 1e-3;
    let mut quiet = 0;
    for _ in 0..cfg.max_iters_per_round {
        let target = p.project(
            &x.iter()
                .zip(&g)
                .map(|(a, b)| a - step * b)
                .collect::<Vec<_>>(),
        );
        let dir: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope = dot(&g, &dir);
        if !(slope < 0.0) {
            break;
        }
        let mut t = 1.0;
        let (x_new, f_new, g_new) = loop {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let (ft, gt) = p.eval(&xt, rho);
            if ft <= f + 1e-4 * t * slope || t < 1e-12 {
                break (xt, ft, gt);
            }
            t *= 0.5;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 {
            (dot(&s, &s) / sy).clamp(1e-12, 1e12)
        } else {
            step * 2.0
        };
        let change = (f - f_new).abs();
        x = x_new;
        g = g_new;
        f = f_new;
        quiet = if change <= cfg.tol_rel * 1e-4 * f.abs().max(1e-12) {
            quiet + 1
        } else {
            0
        };
        if quiet >= 20 {
            break;
        }
    }
    x
}
