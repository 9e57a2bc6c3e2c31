//! Sparse subspace decomposition of a query matrix over a block dictionary.

mod lsq;
mod oracle;
mod romp;

pub use lsq::{cg_normal_equations, CgSolution, PivotedQr};
pub use oracle::{brute_force_block_l0, OracleSolution};
pub use romp::{
    least_squares_on_support, select_regularized, ssd_romp, Decomposition, LsqMethod,
    SolverOptions, SupportFit,
};
