//! Dual-decomposition solver for the bit allocation problem.
//!
//! The budget and causality constraints are priced by `(mu, a, b)`; for
//! fixed prices the Lagrangian splits into an uplink, a compute and a
//! downlink block, each minimized in closed form up to one equality
//! multiplier found by bisection ([`inner`]). The prices are updated either
//! by a nested Newton scheme or by projected subgradient ascent on the dual
//! function. A primal point is
//! recovered from the block minimizers, made exactly causal by
//! [`repair_causality`], and certified by the duality gap and the
//! stationarity residuals of [`kkt_residuals`].

pub mod bisect;
pub mod dual;
pub mod inner;
pub mod kkt;
mod nested;
pub mod repair;
mod subgradient;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bisect::bisect;
pub use dual::{dual_value, subgradients, suffix_sums, DualState, Subgradient};
pub use inner::{solve_compute, solve_downlink, solve_uplink, BlockSolution};
pub use kkt::{kkt_residuals, EqualityMultipliers, KktSummary};
pub use repair::repair_causality;

use crate::models::{self, BitAllocation, EnergyReport, ModelError};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("bisection could not bracket target {target} (reached {reached} after {expansions} doublings)")]
    BracketExpansion {
        target: f64,
        reached: f64,
        expansions: u32,
    },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the multipliers move along the (sub)gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `c / sqrt(k)` per multiplier block, each block's subgradient
    /// normalized by its running maximum magnitude.
    Diminishing { c: f64 },
    /// Safeguarded root search on the budget price with projected Newton
    /// ascent on the causality prices at each trial price.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative duality gap accepted for convergence; also the relative
    /// slack on the cloudlet budget.
    pub dual_tol: f64,
    /// Causality and totals tolerance as a fraction of `L`.
    pub feas_tol_rel: f64,
    pub step_rule: StepRule,
    pub mu_min: f64,
    /// Bisection tolerance as a fraction of the block total.
    pub bisection_tol_rel: f64,
    pub bisection_max_expand: u32,
    /// Budget price beyond which a still-violated budget is declared infeasible.
    pub mu_cap: f64,
    /// Normalized stationarity residual accepted for convergence.
    pub kkt_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            dual_tol: 1e-5,
            feas_tol_rel: 1e-6,
            step_rule: StepRule::Newton,
            mu_min: 1e-12,
            bisection_tol_rel: 1e-9,
            bisection_max_expand: 200,
            mu_cap: 1e12,
            kkt_tol: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn feas_tol_bits(&self, input_bits: f64) -> f64 {
        self.feas_tol_rel * input_bits
    }

    pub fn bisection_tol_bits(&self, total_bits: f64) -> f64 {
        (self.bisection_tol_rel * total_bits).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    IterLimit,
    Infeasible,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::IterLimit => "iter_limit",
            Status::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub allocation: BitAllocation,
    pub dual: DualState,
    pub multipliers: EqualityMultipliers,
    /// Best dual value seen, a lower bound on the optimum, J.
    pub dual_value: f64,
    /// Mobile uplink energy of `allocation`, J.
    pub primal_value: f64,
    /// `primal_value - dual_value`, J.
    pub gap: f64,
    /// `gap / primal_value`.
    pub rel_gap: f64,
    pub iterations: usize,
    pub status: Status,
    pub report: EnergyReport,
    pub kkt: KktSummary,
}

/// Scenario data reused by every dual evaluation.
struct Problem<'a> {
    s: &'a Scenario,
    gains: Vec<f64>,
    m: usize,
}

/// Block minimizers at one dual point together with the dual value and
/// gradient there.
#[derive(Debug, Clone)]
struct DualPoint {
    dual: DualState,
    alloc: BitAllocation,
    eq: EqualityMultipliers,
    value: f64,
    /// Largest lower bound on the optimum known from this point: `value`
    /// or the limit of the dual function as the budget price vanishes with
    /// the causality prices held.
    bound: f64,
    grad: Subgradient,
}

impl<'a> Problem<'a> {
    fn new(s: &'a Scenario) -> Self {
        Self {
            s,
            gains: s.gains(),
            m: s.usable_slots(),
        }
    }

    fn uplink_gains(&self) -> &[f64] {
        &self.gains[models::UPLINK_OFFSET - 1..models::UPLINK_OFFSET - 1 + self.m]
    }

    fn downlink_gains(&self) -> &[f64] {
        &self.gains[models::DOWNLINK_OFFSET - 1..models::DOWNLINK_OFFSET - 1 + self.m]
    }

    fn minimize(
        &self,
        d: &DualState,
        cfg: &SolverConfig,
    ) -> Result<(BitAllocation, EqualityMultipliers), SolverError> {
        let s = self.s;
        let app = &s.application;
        let slot = s.timing.slot_s;
        let up = solve_uplink(
            &d.alpha,
            self.uplink_gains(),
            &s.channel,
            slot,
            app.input_bits,
            cfg,
        )?;
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
        )?;
        let down = solve_downlink(
            d.mu,
            &d.beta,
            self.downlink_gains(),
            &s.channel,
            slot,
            app.output_ratio * app.input_bits,
            cfg,
        )?;
        Ok((
            BitAllocation {
                uplink: up.bits,
                compute: comp.bits,
                downlink: down.bits,
            },
            EqualityMultipliers {
                lambda: up.multiplier,
                nu: comp.multiplier,
                eta: down.multiplier,
            },
        ))
    }

    fn point(&self, dual: DualState, cfg: &SolverConfig) -> Result<DualPoint, SolverError> {
        let (alloc, eq) = self.minimize(&dual, cfg)?;
        // The block totals are met only to the bisection tolerance; pricing
        // the shortfall keeps the value first-order exact in that error.
        let app = &self.s.application;
        let shortfall =
            |target: f64, v: &[f64]| target - crate::sum::neumaier_sum(v.iter().copied());
        let value = crate::sum::neumaier_sum([
            dual::dual_value_with_gains(self.s, &self.gains, &dual, &alloc),
            eq.lambda * shortfall(app.input_bits, &alloc.uplink),
            eq.nu * shortfall(app.input_bits, &alloc.compute),
            eq.eta * shortfall(app.output_ratio * app.input_bits, &alloc.downlink),
        ]);
        let grad = dual::subgradients_with_gains(self.s, &self.gains, &alloc);
        if !value.is_finite() {
            return Err(SolverError::NonFinite("dual value"));
        }
        let bound = value.max(self.price_free_limit(&dual, &alloc, &eq));
        Ok(DualPoint {
            dual,
            alloc,
            eq,
            value,
            bound,
            grad,
        })
    }

    /// `lim g(mu', alpha, beta)` as `mu' -> 0`. The uplink block does not
    /// depend on `mu`, and the compute and downlink blocks tend to linear
    /// programs over their simplices whose values are the total times the
    /// cheapest price. Weak duality holds for every `mu' > 0`, so the limit
    /// is a valid lower bound; it matters when the budget is slack and
    /// `mu_min * E0` is not negligible.
    fn price_free_limit(
        &self,
        d: &DualState,
        alloc: &BitAllocation,
        eq: &EqualityMultipliers,
    ) -> f64 {
        let s = self.s;
        let app = &s.application;
        let kappa = app.output_ratio;
        let slot = s.timing.slot_s;
        let cheapest = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::INFINITY, f64::min);
        let compute_price = cheapest(&mut (0..alloc.len()).map(|k| d.alpha[k] - kappa * d.beta[k]));
        let downlink_price = cheapest(&mut d.beta.iter().copied());
        let uplink = (0..alloc.len()).flat_map(|k| {
            let h = self.uplink_gains()[k];
            [
                models::comm_energy(alloc.uplink[k], h, &s.channel, slot),
                -d.alpha[k] * alloc.uplink[k],
            ]
        });
        let shortfall = app.input_bits - crate::sum::neumaier_sum(alloc.uplink.iter().copied());
        crate::sum::neumaier_sum(uplink.chain([
            eq.lambda * shortfall,
            app.input_bits * compute_price,
            kappa * app.input_bits * downlink_price,
        ]))
    }

    /// Smallest cloudlet energy any allocation can use: the equal compute
    /// split plus the water-filled downlink, each at its own minimum.
    fn cloudlet_energy_floor(&self, cfg: &SolverConfig) -> Result<f64, SolverError> {
        let s = self.s;
        let app = &s.application;
        let share = app.input_bits / self.m as f64;
        let compute = self.m as f64
            * models::comp_energy_slot(
                share,
                s.devices.gamma_cloudlet,
                app.cycles_per_bit,
                s.timing.slot_s,
            );
        let down = solve_downlink(
            1.0,
            &vec![0.0; self.m],
            self.downlink_gains(),
            &s.channel,
            s.timing.slot_s,
            app.output_ratio * app.input_bits,
            cfg,
        )?;
        let down_j: f64 = down
            .bits
            .iter()
            .zip(self.downlink_gains())
            .map(|(&b, &h)| models::comm_energy(b, h, &s.channel, s.timing.slot_s))
            .sum();
        Ok(compute + down_j)
    }

    /// Natural units of the three multiplier blocks: the marginal uplink
    /// energy per bit at the equal split, and the budget price that makes
    /// the marginal compute energy per bit comparable to it.
    fn scales(&self) -> [f64; 3] {
        let s = self.s;
        let app = &s.application;
        let bd = s.channel.bandwidth_hz * s.timing.slot_s;
        let share = app.input_bits / self.m as f64;
        let mean_inv_gain =
            self.uplink_gains().iter().map(|h| 1.0 / h).sum::<f64>() / self.m as f64;
        let per_bit =
            s.channel.noise_psd * std::f64::consts::LN_2 * mean_inv_gain * (share / bd).exp2();
        let compute_per_bit =
            3.0 * s.devices.gamma_cloudlet * app.cycles_per_bit.powi(3) * share * share
                / (s.timing.slot_s * s.timing.slot_s);
        [per_bit / compute_per_bit, per_bit, per_bit]
    }
}

/// Primal point recovered from block minimizers, with its certificate data.
#[derive(Debug, Clone)]
struct Candidate {
    alloc: BitAllocation,
    report: EnergyReport,
    primal: f64,
}

fn recover(p: &Problem, alloc: &BitAllocation) -> Result<Candidate, SolverError> {
    let repaired = repair_causality(alloc, p.s.application.output_ratio);
    let report = models::evaluate_with_gains(p.s, &p.gains, &repaired)?;
    Ok(Candidate {
        primal: report.mobile_uplink_j.total,
        alloc: repaired,
        report,
    })
}

fn budget_ok(s: &Scenario, r: &EnergyReport, cfg: &SolverConfig) -> bool {
    r.budget_residual_j <= cfg.dual_tol * s.devices.cloudlet_budget_j
}

fn feasible(s: &Scenario, r: &EnergyReport, cfg: &SolverConfig) -> bool {
    let tol = cfg.feas_tol_bits(s.application.input_bits);
    budget_ok(s, r, cfg)
        && r.max_causality_violation() <= tol
        && r.totals_residuals.max_abs() <= tol
        && !r.overflow
}

/// Solves the allocation problem; see the module docs for the method.
pub fn optimize(s: &Scenario, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    let p = Problem::new(s);
    if p.m == 1 {
        return forced(&p, cfg);
    }

    let start = p.point(DualState::zeros(p.scales()[0].max(cfg.mu_min), p.m), cfg)?;
    let mut run = Run::new(&p, cfg, start);
    let status = if p.cloudlet_energy_floor(cfg)? > s.devices.cloudlet_budget_j {
        Status::Infeasible
    } else {
        match cfg.step_rule {
            StepRule::Newton => run.nested()?,
            StepRule::Diminishing { c } => run.diminishing(c)?,
        }
    };
    run.finish(status)
}

/// The single-slot instance: every constraint pins the allocation.
fn forced(p: &Problem, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    let s = p.s;
    let alloc = models::equal_allocation(s);
    let report = models::evaluate_with_gains(s, &p.gains, &alloc)?;
    let dual = DualState::zeros(0.0, 1);
    let status = if feasible(s, &report, cfg) {
        Status::Converged
    } else {
        Status::Infeasible
    };
    let ch = &s.channel;
    let bd = ch.bandwidth_hz * s.timing.slot_s;
    let app = &s.application;
    let ln2 = std::f64::consts::LN_2;
    let multipliers = EqualityMultipliers {
        lambda: ch.noise_psd * ln2 / p.gains[0] * (app.input_bits / bd).exp2(),
        nu: 0.0,
        eta: 0.0,
    };
    let value = dual::dual_value_with_gains(s, &p.gains, &dual, &alloc);
    let primal = report.mobile_uplink_j.total;
    let kkt = kkt::kkt_for(s, &p.gains, &alloc, &dual, &multipliers);
    Ok(Solution {
        allocation: alloc,
        dual,
        multipliers,
        dual_value: value,
        primal_value: primal,
        gap: primal - value,
        rel_gap: (primal - value) / primal,
        iterations: 0,
        status,
        report,
        kkt,
    })
}

struct Run<'p, 'a> {
    p: &'p Problem<'a>,
    cfg: &'p SolverConfig,
    /// Dual point with the largest value seen.
    best: DualPoint,
    last: DualPoint,
    best_feasible: Option<Candidate>,
    certified: Option<Candidate>,
    iterations: usize,
}

enum Check {
    Done(Status),
    Continue,
}

impl<'p, 'a> Run<'p, 'a> {
    fn new(p: &'p Problem<'a>, cfg: &'p SolverConfig, start: DualPoint) -> Self {
        Self {
            p,
            cfg,
            best: start.clone(),
            last: start,
            best_feasible: None,
            certified: None,
            iterations: 0,
        }
    }

    /// Records a new dual iterate, offers its recovered primal point and
    /// tests the stopping rules.
    fn accept(&mut self, pt: DualPoint) -> Result<Check, SolverError> {
        if pt.bound > self.best.bound {
            self.best = pt.clone();
        }
        let diverged = pt.dual.mu > self.cfg.mu_cap && pt.grad.mu > 0.0;
        let alloc = pt.alloc.clone();
        self.last = pt;
        if diverged {
            return Ok(Check::Done(Status::Infeasible));
        }
        self.offer(&alloc)
    }

    /// Repairs `alloc`, keeps it if it is the best feasible point so far and
    /// reports convergence when it closes the gap against the best dual
    /// value and is stationary at the current multipliers.
    fn offer(&mut self, alloc: &BitAllocation) -> Result<Check, SolverError> {
        let s = self.p.s;
        let cand = recover(self.p, alloc)?;
        if !feasible(s, &cand.report, self.cfg) {
            return Ok(Check::Continue);
        }
        if self
            .best_feasible
            .as_ref()
            .is_none_or(|b| cand.primal < b.primal)
        {
            self.best_feasible = Some(cand.clone());
        }
        let gap = cand.primal - self.best.bound;
        if gap <= self.cfg.dual_tol * cand.primal.abs() {
            let kkt = kkt::kkt_for(
                s,
                &self.p.gains,
                &cand.alloc,
                &self.last.dual,
                &self.last.eq,
            );
            if kkt.max_stationarity() <= self.cfg.kkt_tol {
                self.certified = Some(cand);
                return Ok(Check::Done(Status::Converged));
            }
        }
        Ok(Check::Continue)
    }

    fn finish(self, status: Status) -> Result<Solution, SolverError> {
        let p = self.p;
        let cand = match (status, self.certified, self.best_feasible) {
            (Status::Converged, Some(c), _) => c,
            (Status::IterLimit, _, Some(c)) => c,
            _ => recover(p, &self.last.alloc)?,
        };
        let last = self.last;
        let kkt = kkt::kkt_for(p.s, &p.gains, &cand.alloc, &last.dual, &last.eq);
        let dual_value = self.best.bound;
        let gap = cand.primal - dual_value;
        Ok(Solution {
            allocation: cand.alloc,
            dual: last.dual,
            multipliers: last.eq,
            dual_value,
            primal_value: cand.primal,
            gap,
            rel_gap: gap / cand.primal.abs(),
            iterations: self.iterations,
            status,
            report: cand.report,
            kkt,
        })
    }
}
