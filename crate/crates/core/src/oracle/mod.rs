//! Reference solvers used to certify [`crate::solver::optimize`] on small
//! instances. Neither shares any optimization code with the dual solver;
//! both score their answers with [`crate::models::evaluate`].

mod descent;
mod grid;

pub use descent::{primal_descent, DescentConfig};
pub use grid::{grid_search, grid_search_with_budget, grid_step_energy, DEFAULT_NODE_BUDGET};

use thiserror::Error;

use crate::models::{BitAllocation, ModelError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid search supports at most 3 usable slots, scenario has {0}")]
    TooManySlots(usize),
    #[error("grid of {grid_bits} bits does not divide {total_bits} bits")]
    GridMismatch { grid_bits: f64, total_bits: f64 },
    #[error("enumeration needs {nodes} tuples, budget is {budget}")]
    TooLarge { nodes: u128, budget: u128 },
    #[error("no allocation on the grid meets every constraint")]
    NoFeasiblePoint,
    #[error("starting allocation exceeds the cloudlet budget by {excess_j} J")]
    InfeasibleStart {
        candidate: BitAllocation,
        excess_j: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}
