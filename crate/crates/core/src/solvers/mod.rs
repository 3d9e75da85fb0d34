//! Sparse decoders.

mod basis_pursuit;
mod bpdn;
mod omp;
mod simplex;

pub use basis_pursuit::{
    basis_pursuit, basis_pursuit_with_state, warm_start_add_row, IterationCounts, LpStatus,
    SimplexState, SlackCost, SolveReport,
};
pub use bpdn::{bpdn, bpdn_objective, bpdn_optimality_residual, lambda_schedule, BpdnOptions, BpdnReport};
pub use omp::{omp, OmpReport};
pub use simplex::SimplexOptions;

#[cfg(test)]
mod tests;
