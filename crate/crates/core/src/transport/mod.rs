//! Entropy-regularized pixel-to-class transport.
//!
//! Per-pixel class probabilities of a mini-batch are flattened into an
//! `n x k` matrix, turned into costs `-log p`, and assigned to classes under
//! a marginal prior by Sinkhorn-Knopp scaling. An exact transportation
//! simplex solver is provided as a verification oracle.

mod cost;
pub mod io;
mod lp;
mod sinkhorn;
mod tensor;

pub use cost::{build_cost_matrix, CostMatrix};
pub use lp::{lp_oracle_solve, OracleSolution, ORACLE_MAX_COLS, ORACLE_MAX_ROWS};
pub use sinkhorn::{
    conditional_rows, entropy, plan_row_normalize, sinkhorn_solve, sinkhorn_solve_annealed, sinkhorn_solve_warm, transport_cost, MarginalPrior, Scaling,
    SinkhornSettings, TransportPlan,
};
pub use tensor::{flatten_predictions, unflatten_predictions, Layout, ProbTensor};
