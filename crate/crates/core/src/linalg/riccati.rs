use crate::error::{Error, Result};
use crate::linalg::cholesky::cholesky_factor;
use crate::linalg::lyapunov::{solve_dlyap, STABILITY_MARGIN};
use crate::linalg::Matrix;

/// Iteration limits for the DARE solver.
#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    pub max_iter: usize,
    /// Relative Frobenius step at which the fixed-point iteration stops.
    pub tol: f64,
    /// Newton–Kleinman refinement steps applied after the fixed point.
    pub newton_steps: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-12,
            newton_steps: 3,
        }
    }
}

/// Right-hand side `Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA` of the DARE.
pub fn dare_rhs(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let at = a.transpose();
    let pa = p * a;
    let pb = p * b;
    let s = (r + &(&b.transpose() * &pb)).symmetrize();
    let f = cholesky_factor(&s)?;
    let gain = f.solve_matrix(&(&b.transpose() * &pa))?;
    let out = &(q + &(&at * &pa)) - &(&(&at * &pb) * &gain);
    Ok(out.symmetrize())
}

/// LQR gain `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let pb = p * b;
    let s = (r + &(&b.transpose() * &pb)).symmetrize();
    cholesky_factor(&s)?.solve_matrix(&(&pb.transpose() * a))
}

fn check_shapes(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<()> {
    let n = a.rows();
    let m = b.cols();
    let ok = a.is_square()
        && b.rows() == n
        && q.rows() == n
        && q.cols() == n
        && r.rows() == m
        && r.cols() == m;
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "DARE with A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            q.rows(),
            q.cols(),
            r.rows(),
            r.cols()
        )))
    }
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    solve_dare_with(a, b, q, r, DareOptions::default())
}

pub fn solve_dare_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    opts: DareOptions,
) -> Result<Matrix> {
    check_shapes(a, b, q, r)?;
    let mut p = q.symmetrize();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let next = dare_rhs(a, b, q, r, &p)
            .map_err(|e| Error::NoStabilizingSolution(format!("iteration failed: {e}")))?;
        if next.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NoStabilizingSolution("iteration diverged".into()));
        }
        let step = (&next - &p).frobenius_norm();
        let scale = next.frobenius_norm();
        p = next;
        if step <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoStabilizingSolution(format!(
            "no convergence in {} iterations",
            opts.max_iter
        )));
    }

    let mut resid = (&dare_rhs(a, b, q, r, &p)? - &p).frobenius_norm();
    for _ in 0..opts.newton_steps {
        if resid <= 1e-15 * p.frobenius_norm() {
            break;
        }
        let Ok(candidate) = newton_step(a, b, q, r, &p) else {
            break;
        };
        let cand_resid = (&dare_rhs(a, b, q, r, &candidate)? - &candidate).frobenius_norm();
        if cand_resid < resid {
            p = candidate;
            resid = cand_resid;
        } else {
            break;
        }
    }

    let k = lqr_gain(a, b, r, &p)?;
    let rho = (a - &(b * &k)).spectral_radius();
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::NoStabilizingSolution(format!(
            "closed-loop spectral radius {rho}"
        )));
    }
    Ok(p)
}

/// One Newton–Kleinman step: solve `P = Acl'ᵀ P Acl' + Q + KᵀRK` for the
/// gain of the current iterate.
fn newton_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let k = lqr_gain(a, b, r, p)?;
    let acl = a - &(b * &k);
    let stage = q + &(&(&k.transpose() * r) * &k);
    solve_dlyap(&acl.transpose(), &stage.symmetrize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[&[v]])
    }

    #[test]
    fn zero_dynamics_collapse_to_q() {
        let q = Matrix::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let p = solve_dare(
            &Matrix::zeros(2, 2),
            &Matrix::identity(2),
            &q,
            &Matrix::identity(2),
        )
        .unwrap();
        assert!((&p - &q).frobenius_norm() < 1e-15);
    }

    #[test]
    fn scalar_closed_form() {
        // p = 1 + 0.81 p − 0.81 p² / (1 + p)  ⇔  p² − 0.81 p − 1 = 0
        let expected = (0.81 + (0.81_f64 * 0.81 + 4.0).sqrt()) / 2.0;
        let p = solve_dare(&scalar(0.9), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((p[(0, 0)] - expected).abs() < 1e-12);
        assert!((expected - 1.483_900).abs() < 1e-6);
        let resid =
            1.0 + 0.81 * p[(0, 0)] - 0.81 * p[(0, 0)].powi(2) / (1.0 + p[(0, 0)]) - p[(0, 0)];
        assert!(resid.abs() <= 1e-12);
    }

    #[test]
    fn zero_input_reduces_to_lyapunov() {
        let a = Matrix::from_rows(&[&[0.5, 0.2], &[-0.1, 0.7]]);
        let b = Matrix::zeros(2, 1);
        let q = Matrix::identity(2);
        let p = solve_dare(&a, &b, &q, &scalar(1.0)).unwrap();
        let oracle = solve_dlyap(&a.transpose(), &q).unwrap();
        assert!((&p - &oracle).frobenius_norm() <= 1e-11 * oracle.frobenius_norm());
    }

    #[test]
    fn unstabilizable_fails() {
        let a = Matrix::from_diag(&[1.5, 0.5]);
        let b = Matrix::from_rows(&[&[0.0], &[1.0]]);
        assert!(matches!(
            solve_dare(&a, &b, &Matrix::identity(2), &scalar(1.0)),
            Err(Error::NoStabilizingSolution(_))
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            solve_dare(
                &Matrix::zeros(2, 2),
                &Matrix::zeros(3, 1),
                &Matrix::identity(2),
                &scalar(1.0)
            ),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
