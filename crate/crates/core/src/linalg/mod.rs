//! Dense linear-algebra kernels sized for small control problems: SPD
//! factorization, matrix-free conjugate gradients, and the discrete Riccati
//! and Lyapunov solvers.

mod cg;
mod cholesky;
mod expm;
mod lyapunov;
mod matrix;
mod riccati;

pub use cg::{cg_solve, default_max_iter, LinearOperator, CG_DEFAULT_TOL};
pub use cholesky::{cholesky_factor, lu_solve, solve_spd, SpdFactor};
pub use expm::expm;
pub use lyapunov::{solve_dlyap, KRONECKER_MAX_DIM, STABILITY_MARGIN};
pub use matrix::{axpy, dot, norm2, Matrix};
pub use riccati::{dare_rhs, lqr_gain, solve_dare, solve_dare_with, DareOptions};
