//! Nested dual ascent.
//!
//! `phi(mu) = max_{a,b} g(mu, a, b)` is concave in `mu` with derivative
//! equal to the budget residual of the subproblem minimizer, so the budget
//! price is found by a safeguarded false-position search on `log mu`.
//!
//! For each trial `mu` the causality prices are maximized by projected
//! Newton steps on the scaled prices `a / mu` and `b / mu`. In these
//! coordinates the compute and downlink blocks do not depend on `mu`, so
//! the curvature stays bounded as `mu` shrinks. The Hessian of each block
//! follows from implicit differentiation of its closed form, and the only
//! constraints are `a, b >= 0`. The last price of each family is fixed at
//! zero: with the totals pinned, a common shift of the suffix sums changes
//! nothing.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::dual::DualState;
use super::{recover, Check, DualPoint, Run, SolverError, Status};
use crate::sum::neumaier_sum;

const SUFFICIENT: f64 = 1e-4;
const GROWTH: f64 = 10.0;
/// Relative rounding level of the merit.
const NOISE: f64 = 1e-13;
/// Consecutive steps below the rounding level allowed before giving up.
const BLIND_STEPS: usize = 4;

enum Inner {
    Done(Status),
    /// Budget residual at the last iterate for this `mu`.
    Settled(f64),
}

/// One end of the bracket on `log mu` with its warm start.
struct End {
    t: f64,
    psi: f64,
    x: Vec<f64>,
}

/// `J = diag(d) - d d^T / sum(d)`: sensitivity of a water-filled block to
/// its per-slot prices when the total is held fixed.
fn block_jacobian(d: &[f64]) -> DMatrix<f64> {
    let m = d.len();
    let total: f64 = d.iter().sum();
    let mut j = DMatrix::from_diagonal(&DVector::from_column_slice(d));
    if total > 0.0 {
        for r in 0..m {
            for c in 0..m {
                j[(r, c)] -= d[r] * d[c] / total;
            }
        }
    }
    j
}

impl Run<'_, '_> {
    pub(super) fn nested(&mut self) -> Result<Status, SolverError> {
        let n = 2 * (self.p.m - 1);
        let mu_min = self.cfg.mu_min;

        let mut x = vec![0.0; n];
        let psi = match self.fixed_mu(mu_min, &mut x)? {
            Inner::Done(st) => return Ok(st),
            Inner::Settled(psi) => psi,
        };
        let mut lo = End {
            t: mu_min.ln(),
            psi,
            x,
        };
        if psi <= 0.0 {
            return self.polish(mu_min, lo.x);
        }

        // Grow the price until the budget is met.
        let mut mu = self.p.scales()[0].max(GROWTH * mu_min);
        let mut hi = loop {
            let mut x = self.warm_start(mu, &lo)?;
            let psi = match self.fixed_mu(mu, &mut x)? {
                Inner::Done(st) => return Ok(st),
                Inner::Settled(psi) => psi,
            };
            let end = End { t: mu.ln(), psi, x };
            if psi <= 0.0 {
                break end;
            }
            lo = end;
            if mu > self.cfg.mu_cap {
                return Ok(Status::Infeasible);
            }
            if self.iterations >= self.cfg.max_iters {
                return Ok(Status::IterLimit);
            }
            mu *= GROWTH;
        };

        // Illinois false position on psi(t), decreasing in t.
        let mut side = 0i8;
        while self.iterations < self.cfg.max_iters {
            let width = hi.t - lo.t;
            if width <= 1e-13 * hi.t.abs().max(1.0) {
                let end = if -hi.psi <= lo.psi { hi } else { lo };
                return self.polish(end.t.exp(), end.x);
            }
            let secant = lo.t + lo.psi / (lo.psi - hi.psi) * width;
            let t = if secant.is_finite() {
                secant.clamp(lo.t + 0.02 * width, hi.t - 0.02 * width)
            } else {
                lo.t + 0.5 * width
            };
            let mut x = self.warm_start(t.exp(), if t - lo.t <= hi.t - t { &lo } else { &hi })?;
            let psi = match self.fixed_mu(t.exp(), &mut x)? {
                Inner::Done(st) => return Ok(st),
                Inner::Settled(psi) => psi,
            };
            if psi > 0.0 {
                lo = End { t, psi, x };
                if side == 1 {
                    hi.psi *= 0.5;
                }
                side = 1;
            } else {
                hi = End { t, psi, x };
                if side == -1 {
                    lo.psi *= 0.5;
                }
                side = -1;
            }
        }
        Ok(Status::IterLimit)
    }

    /// Starting prices for a new budget price: the previous scaled prices,
    /// the previous unscaled prices or zero, whichever has the largest dual
    /// value. Which one transfers well depends on whether the uplink or the
    /// cloudlet blocks set the prices.
    fn warm_start(&self, mu: f64, from: &End) -> Result<Vec<f64>, SolverError> {
        let ratio = from.t.exp() / mu;
        let candidates = [
            from.x.clone(),
            from.x.iter().map(|v| v * ratio).collect(),
            vec![0.0; from.x.len()],
        ];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, c) in candidates.iter().enumerate() {
            let value = self.fixed_point(mu, c)?.value;
            if value > best.0 {
                best = (value, i);
            }
        }
        Ok(candidates.into_iter().nth(best.1).unwrap_or_default())
    }

    /// Keeps ascending at a settled budget price until the certificate
    /// closes or no further progress is possible.
    fn polish(&mut self, mu: f64, mut x: Vec<f64>) -> Result<Status, SolverError> {
        while self.iterations < self.cfg.max_iters {
            let (before, value) = (self.iterations, self.best.bound);
            match self.fixed_mu(mu, &mut x)? {
                Inner::Done(st) => return Ok(st),
                Inner::Settled(_) if self.iterations == before => break,
                Inner::Settled(_) if self.best.bound - value <= NOISE * value.abs() => break,
                Inner::Settled(_) => {}
            }
        }
        Ok(Status::IterLimit)
    }

    fn fixed_point(&self, mu: f64, x: &[f64]) -> Result<DualPoint, SolverError> {
        let k = self.p.m - 1;
        let prices = |v: &[f64]| -> Vec<f64> { v.iter().map(|p| mu * p).chain([0.0]).collect() };
        let dual = DualState::new(mu, prices(&x[..k]), prices(&x[k..]));
        self.p.point(dual, self.cfg)
    }

    /// Gradient of `g / mu` in the scaled prices: the prefix residuals.
    fn scaled_grad(&self, pt: &DualPoint) -> Vec<f64> {
        let k = self.p.m - 1;
        pt.grad.a[..k]
            .iter()
            .chain(&pt.grad.b[..k])
            .copied()
            .collect()
    }

    /// Negated Hessian of `g / mu` in the scaled prices.
    fn curvature(&self, pt: &DualPoint) -> DMatrix<f64> {
        let s = self.p.s;
        let m = self.p.m;
        let app = &s.application;
        let slot = s.timing.slot_s;
        let bd = s.channel.bandwidth_hz * slot;
        let kappa = app.output_ratio;
        let q1 = slot * slot / (3.0 * s.devices.gamma_cloudlet * app.cycles_per_bit.powi(3));
        let mu = pt.dual.mu;
        let x = &pt.alloc;
        let active = |bits: f64, v: f64| if bits > 0.0 && v.is_finite() { v } else { 0.0 };
        let up: Vec<f64> = (0..m)
            .map(|k| {
                active(
                    x.uplink[k],
                    mu * bd / (LN_2 * (pt.eq.lambda + pt.dual.alpha[k])),
                )
            })
            .collect();
        let comp: Vec<f64> = (0..m)
            .map(|k| active(x.compute[k], q1 / (2.0 * x.compute[k])))
            .collect();
        let down: Vec<f64> = (0..m)
            .map(|k| {
                active(
                    x.downlink[k],
                    mu * bd / (LN_2 * (pt.eq.eta - pt.dual.beta[k])),
                )
            })
            .collect();
        let (ju, jc, jd) = (
            block_jacobian(&up),
            block_jacobian(&comp),
            block_jacobian(&down),
        );

        // Curvature in the suffix sums (alpha / mu, beta / mu).
        let mut h = DMatrix::zeros(2 * m, 2 * m);
        h.view_mut((0, 0), (m, m)).copy_from(&(&ju + &jc));
        h.view_mut((0, m), (m, m)).copy_from(&(&jc * -kappa));
        h.view_mut((m, 0), (m, m)).copy_from(&(&jc * -kappa));
        h.view_mut((m, m), (m, m))
            .copy_from(&(&jd + &jc * (kappa * kappa)));

        // Map to the prices: alpha_k = sum_{i>=k} a_i, so column i of the
        // map has ones in rows 0..=i. Prefix-sum rows and columns.
        let k = m - 1;
        let idx = |family: usize, i: usize| family * m + i;
        let mut rows = DMatrix::zeros(2 * k, 2 * m);
        for fam in 0..2 {
            for c in 0..2 * m {
                let mut acc = 0.0;
                for i in 0..k {
                    acc += h[(idx(fam, i), c)];
                    rows[(fam * k + i, c)] = acc;
                }
            }
        }
        let mut out = DMatrix::zeros(2 * k, 2 * k);
        for r in 0..2 * k {
            for fam in 0..2 {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += rows[(r, idx(fam, j))];
                    out[(r, fam * k + j)] = acc;
                }
            }
        }
        out
    }

    /// Projected Newton direction: Newton on the free prices, scaled
    /// gradient on prices held at zero by an outward gradient.
    fn newton_direction(&self, x: &[f64], grad: &[f64], hess: &DMatrix<f64>) -> Vec<f64> {
        let n = x.len();
        let diag: Vec<f64> = (0..n).map(|i| hess[(i, i)]).collect();
        let scale = diag
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let floor = 1e-12 * scale;
        let probe = (0..n)
            .map(|i| (x[i] - (x[i] + grad[i] / diag[i].max(floor)).max(0.0)).abs())
            .fold(0.0f64, f64::max);
        let held: Vec<bool> = (0..n).map(|i| x[i] <= probe && grad[i] <= 0.0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();

        let mut dir: Vec<f64> = (0..n).map(|i| grad[i] / diag[i].max(floor)).collect();
        if !free.is_empty() {
            let f = free.len();
            let rhs = DVector::from_iterator(f, free.iter().map(|&i| grad[i]));
            let mut reg = 1e-12 * scale;
            for _ in 0..8 {
                let sys = DMatrix::from_fn(f, f, |r, c| {
                    hess[(free[r], free[c])] + if r == c { reg } else { 0.0 }
                });
                if let Some(ch) = sys.cholesky() {
                    let step = ch.solve(&rhs);
                    for (r, &i) in free.iter().enumerate() {
                        dir[i] = step[r];
                    }
                    break;
                }
                reg *= 100.0;
            }
        }
        dir
    }

    /// `g / mu` without the uplink block, which is tracked separately.
    fn cloudlet_part(&self, pt: &DualPoint) -> f64 {
        let app = &self.p.s.application;
        let kappa = app.output_ratio;
        let mu = pt.dual.mu;
        let (x, d) = (&pt.alloc, &pt.dual);
        let shortfall = |target: f64, v: &[f64]| target - neumaier_sum(v.iter().copied());
        let linear = (0..x.len()).flat_map(|k| {
            [
                (d.alpha[k] - kappa * d.beta[k]) / mu * x.compute[k],
                d.beta[k] / mu * x.downlink[k],
            ]
        });
        neumaier_sum(
            [
                pt.grad.mu,
                pt.eq.nu / mu * shortfall(app.input_bits, &x.compute),
                pt.eq.eta / mu * shortfall(kappa * app.input_bits, &x.downlink),
            ]
            .into_iter()
            .chain(linear),
        )
    }

    /// Whether `g / mu` can be formed directly: the rounding error of the
    /// uplink block, divided by `mu`, stays far below the budget scale.
    fn direct_merit(&self, pt: &DualPoint) -> bool {
        let x = &pt.alloc;
        let size = pt.eq.lambda.abs() * self.p.s.application.input_bits
            + (0..x.len())
                .map(|k| (pt.dual.alpha[k] * x.uplink[k]).abs())
                .sum::<f64>();
        f64::EPSILON * size / pt.dual.mu <= NOISE * self.p.s.devices.cloudlet_budget_j
    }

    /// Uplink part and total of the merit at `pt`. The merit is `g / mu`,
    /// exactly when `direct` and otherwise up to a constant fixed by the
    /// first point of the call, with the uplink part integrated from `from`.
    fn merit(&self, from: Option<&Tracked>, pt: &DualPoint, direct: bool) -> (f64, f64) {
        let cloudlet = self.cloudlet_part(pt);
        let uplink = if direct {
            pt.value / pt.dual.mu - cloudlet
        } else {
            from.map_or(0.0, |a| a.uplink + Self::uplink_change(&a.pt, pt))
        };
        (uplink, uplink + cloudlet)
    }

    /// Change of the uplink block of `g / mu` between two points at the
    /// same `mu`, by the trapezoid rule on its gradient `-uplink`. Taking
    /// a difference of values instead cancels catastrophically for small `mu`.
    fn uplink_change(from: &DualPoint, to: &DualPoint) -> f64 {
        let mu = to.dual.mu;
        -0.5 * neumaier_sum((0..from.alloc.len()).map(|k| {
            (from.alloc.uplink[k] + to.alloc.uplink[k]) * (to.dual.alpha[k] - from.dual.alpha[k])
                / mu
        }))
    }

    /// Whether the recovered point is optimal for the problem with the
    /// budget priced at `mu` rather than enforced.
    fn settled(&self, pt: &DualPoint) -> Result<bool, SolverError> {
        let violation = self.scaled_grad(pt).into_iter().fold(0.0, f64::max);
        if violation > 1e-2 * self.cfg.feas_tol_bits(self.p.s.application.input_bits) {
            return Ok(false);
        }
        let cand = recover(self.p, &pt.alloc)?;
        let priced = cand.primal + pt.dual.mu * cand.report.budget_residual_j;
        if priced - pt.value > 0.1 * self.cfg.dual_tol * cand.primal.abs() {
            return Ok(false);
        }
        let kkt = super::kkt::kkt_for(self.p.s, &self.p.gains, &cand.alloc, &pt.dual, &pt.eq);
        Ok(kkt.max_stationarity() <= 0.5 * self.cfg.kkt_tol)
    }

    /// Backtracking along the projected path `max(0, x + t dir)` until the
    /// merit gains a fixed fraction of the first-order prediction. A full
    /// step whose prediction is below the rounding level of the merit is
    /// taken unless it visibly loses; the flag reports such a step.
    fn line_search(
        &self,
        mu: f64,
        x: &[f64],
        dir: &[f64],
        grad: &[f64],
        at: &Tracked,
    ) -> Result<Option<(Tracked, bool)>, SolverError> {
        let noise = NOISE * at.merit.abs().max(f64::MIN_POSITIVE);
        let mut t = 1.0;
        while t >= 1e-12 {
            let xt: Vec<f64> = x
                .iter()
                .zip(dir)
                .map(|(v, d)| (v + t * d).max(0.0))
                .collect();
            let predicted: f64 = grad
                .iter()
                .zip(xt.iter().zip(x))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            if predicted > 0.0 {
                let pt = self.fixed_point(mu, &xt)?;
                let (uplink, merit) = self.merit(Some(at), &pt, at.direct);
                if merit >= at.merit + SUFFICIENT * predicted {
                    return Ok(Some((
                        Tracked {
                            x: xt,
                            pt,
                            uplink,
                            merit,
                            direct: at.direct,
                        },
                        false,
                    )));
                }
                if t == 1.0 && predicted <= noise && merit >= at.merit - noise {
                    return Ok(Some((
                        Tracked {
                            x: xt,
                            pt,
                            uplink,
                            merit,
                            direct: at.direct,
                        },
                        true,
                    )));
                }
            }
            t *= 0.5;
        }
        Ok(None)
    }

    /// Projected Newton ascent on the scaled causality prices at fixed `mu`.
    /// Falls back to a diagonally scaled gradient step when the Newton
    /// step makes no progress.
    /// Per-coordinate size of a step the local model can be trusted over:
    /// the larger of the family's largest price and its equality multiplier.
    fn price_scale(&self, mu: f64, at: &Tracked) -> Vec<f64> {
        let half = at.x.len() / 2;
        let family = |xs: &[f64], eq: f64| {
            xs.iter()
                .fold((eq / mu).abs(), |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE)
        };
        let (a, b) = (
            family(&at.x[..half], at.pt.eq.lambda),
            family(&at.x[half..], at.pt.eq.eta),
        );
        (0..at.x.len())
            .map(|i| if i < half { a } else { b })
            .collect()
    }

    /// Shrinks `dir` so that no coordinate of the projected step moves more
    /// than `radius` times its scale.
    fn clip(x: &[f64], mut dir: Vec<f64>, scale: &[f64], radius: f64) -> Vec<f64> {
        let worst = (0..x.len())
            .map(|i| ((x[i] + dir[i]).max(0.0) - x[i]).abs() / scale[i])
            .fold(0.0, f64::max);
        if worst > radius {
            let f = radius / worst;
            dir.iter_mut().for_each(|d| *d *= f);
        }
        dir
    }

    fn fixed_mu(&mut self, mu: f64, x: &mut Vec<f64>) -> Result<Inner, SolverError> {
        let pt = self.fixed_point(mu, x)?;
        if let Check::Done(st) = self.accept(pt.clone())? {
            return Ok(Inner::Done(st));
        }
        let direct = self.direct_merit(&pt);
        let (uplink, merit) = self.merit(None, &pt, direct);
        let mut at = Tracked {
            x: std::mem::take(x),
            pt,
            uplink,
            merit,
            direct,
        };
        let mut radius = 1.0;
        let mut blind_run = 0;
        while self.iterations < self.cfg.max_iters && !at.x.is_empty() {
            if self.settled(&at.pt)? {
                break;
            }
            let grad = self.scaled_grad(&at.pt);
            let hess = self.curvature(&at.pt);
            let scale = self.price_scale(mu, &at);
            let newton = Self::clip(
                &at.x,
                self.newton_direction(&at.x, &grad, &hess),
                &scale,
                radius,
            );
            let mut next = self.line_search(mu, &at.x, &newton, &grad, &at)?;
            if next.is_none() {
                let floor = 1e-12 * hess.diagonal().amax();
                let dir: Vec<f64> = (0..grad.len())
                    .map(|i| grad[i] / hess[(i, i)].max(floor))
                    .collect();
                next = self.line_search(
                    mu,
                    &at.x,
                    &Self::clip(&at.x, dir, &scale, radius),
                    &grad,
                    &at,
                )?;
            }
            let Some((next, blind)) = next else { break };
            blind_run = if blind { blind_run + 1 } else { 0 };
            let used = next
                .x
                .iter()
                .zip(&at.x)
                .zip(&scale)
                .map(|((p, q), s)| (p - q).abs() / s)
                .fold(0.0, f64::max);
            radius = (4.0 * used).max(1.0);
            self.iterations += 1;
            at = next;
            if let Check::Done(st) = self.accept(at.pt.clone())? {
                *x = at.x;
                return Ok(Inner::Done(st));
            }
            if blind_run > BLIND_STEPS {
                break;
            }
        }
        *x = at.x;
        Ok(Inner::Settled(at.pt.grad.mu))
    }
}

/// Iterate of the inner ascent with its tracked merit.
struct Tracked {
    x: Vec<f64>,
    pt: DualPoint,
    uplink: f64,
    merit: f64,
    direct: bool,
}
