use crate::error::{Error, Result};
use crate::linalg::cholesky::lu_solve;
use crate::linalg::Matrix;

/// Largest state dimension solved by dense Kronecker vectorization; larger
/// problems use the doubling iteration.
pub const KRONECKER_MAX_DIM: usize = 8;

/// Margin below 1 that the closed-loop spectral radius must respect.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Solves the discrete Lyapunov equation `Λ − A Λ Aᵀ = Σ` for stable `A`.
pub fn solve_dlyap(acl: &Matrix, sigma: &Matrix) -> Result<Matrix> {
    let n = acl.rows();
    if !acl.is_square() || sigma.rows() != n || sigma.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "lyapunov with A {}x{} and Σ {}x{}",
            acl.rows(),
            acl.cols(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    let rho = acl.spectral_radius();
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableClosedLoop(rho));
    }
    let lambda = if n <= KRONECKER_MAX_DIM {
        kronecker_solve(acl, sigma)?
    } else {
        doubling_solve(acl, sigma)
    };
    Ok(lambda.symmetrize())
}

fn kronecker_solve(acl: &Matrix, sigma: &Matrix) -> Result<Matrix> {
    let n = acl.rows();
    // column-major vec: vec(A Λ Aᵀ) = (A ⊗ A) vec(Λ)
    let system = &Matrix::identity(n * n) - &acl.kron(acl);
    let x = lu_solve(&system, &sigma.vec())?;
    Matrix::from_col_major(n, n, &x)
}

fn doubling_solve(acl: &Matrix, sigma: &Matrix) -> Matrix {
    let mut x = sigma.clone();
    let mut a = acl.clone();
    for _ in 0..64 {
        let incr = &(&a * &x) * &a.transpose();
        let done = incr.frobenius_norm() <= 1e-17 * x.frobenius_norm();
        x = &x + &incr;
        if done {
            break;
        }
        a = &a * &a;
    }
    x
}
