//! Projected subgradient ascent with diminishing steps.
//!
//! All multipliers move together in coordinates scaled by their natural
//! units. Each block's step is `c / sqrt(k)` times its subgradient
//! normalized by the largest magnitude seen so far in that block. The
//! running average of the subproblem minimizers is offered for primal
//! recovery alongside the last iterate.

use super::dual::{DualState, Subgradient};
use super::{Check, Run, SolverError, Status};
use crate::models::BitAllocation;

/// Box projection in scaled coordinates `z = (mu / s_mu, a / s_a, b / s_b)`.
struct Layout {
    m: usize,
    scale: [f64; 3],
    mu_floor: f64,
}

impl Layout {
    fn block(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else if i <= self.m {
            1
        } else {
            2
        }
    }

    fn to_dual(&self, z: &[f64]) -> DualState {
        let m = self.m;
        DualState::new(
            z[0] * self.scale[0],
            z[1..=m].iter().map(|v| v * self.scale[1]).collect(),
            z[m + 1..].iter().map(|v| v * self.scale[2]).collect(),
        )
    }

    fn from_dual(&self, d: &DualState) -> Vec<f64> {
        std::iter::once(d.mu / self.scale[0])
            .chain(d.a.iter().map(|v| v / self.scale[1]))
            .chain(d.b.iter().map(|v| v / self.scale[2]))
            .collect()
    }

    fn grad(&self, g: &Subgradient) -> Vec<f64> {
        std::iter::once(g.mu * self.scale[0])
            .chain(g.a.iter().map(|v| v * self.scale[1]))
            .chain(g.b.iter().map(|v| v * self.scale[2]))
            .collect()
    }

    fn project(&self, z: &mut [f64]) {
        z[0] = z[0].max(self.mu_floor);
        for v in &mut z[1..] {
            *v = v.max(0.0);
        }
    }
}

fn accumulate(sum: &mut BitAllocation, x: &BitAllocation) {
    for (acc, v) in [
        (&mut sum.uplink, &x.uplink),
        (&mut sum.compute, &x.compute),
        (&mut sum.downlink, &x.downlink),
    ] {
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
}

fn scaled(sum: &BitAllocation, k: usize) -> BitAllocation {
    let f = |v: &[f64]| v.iter().map(|x| x / k as f64).collect();
    BitAllocation {
        uplink: f(&sum.uplink),
        compute: f(&sum.compute),
        downlink: f(&sum.downlink),
    }
}

impl Run<'_, '_> {
    pub(super) fn diminishing(&mut self, c: f64) -> Result<Status, SolverError> {
        let scale = self.p.scales();
        let layout = Layout {
            m: self.p.m,
            scale,
            mu_floor: self.cfg.mu_min / scale[0],
        };
        let start = self.p.point(
            DualState::zeros(scale[0].max(self.cfg.mu_min), self.p.m),
            self.cfg,
        )?;
        let mut z = layout.from_dual(&start.dual);
        let mut running_max = [0.0f64; 3];
        let mut sum = BitAllocation::zeros(self.p.m);
        accumulate(&mut sum, &start.alloc);
        if let Check::Done(st) = self.accept(start)? {
            return Ok(st);
        }
        while self.iterations < self.cfg.max_iters {
            self.iterations += 1;
            let gz = layout.grad(&self.last.grad);
            for (i, g) in gz.iter().enumerate() {
                let b = layout.block(i);
                running_max[b] = running_max[b].max(g.abs());
            }
            let step = c / (self.iterations as f64).sqrt();
            for (i, v) in z.iter_mut().enumerate() {
                let norm = running_max[layout.block(i)];
                if norm > 0.0 {
                    *v += step * gz[i] / norm;
                }
            }
            layout.project(&mut z);
            let pt = self.p.point(layout.to_dual(&z), self.cfg)?;
            accumulate(&mut sum, &pt.alloc);
            if let Check::Done(st) = self.accept(pt)? {
                return Ok(st);
            }
            if let Check::Done(st) = self.offer(&scaled(&sum, self.iterations + 1))? {
                return Ok(st);
            }
        }
        Ok(Status::IterLimit)
    }
}
