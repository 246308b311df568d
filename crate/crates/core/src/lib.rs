//! Minimum-mobile-energy bit allocation for offloading a computation to a
//! UAV-mounted cloudlet over a slotted FDD link.
//!
//! * [`scenario`] loads and validates problem instances.
//! * [`models`] holds the energy formulas, the baselines and the evaluator.
//! * [`solver`] solves the allocation problem by dual decomposition.
//! * [`oracle`] has two independent reference solvers used for verification.
//! * [`cli`] implements the command-line front end.

pub mod cli;
pub mod models;
pub mod oracle;
pub mod scenario;
pub mod solver;
mod sum;

pub use models::{
    equal_allocation, evaluate, mobile_execution_energy, BitAllocation, EnergyReport,
};
pub use scenario::{load_scenario, Scenario};
pub use solver::{optimize, Solution, SolverConfig, Status};
