use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, norm2};
use crate::linalg::Matrix;

/// Default relative residual tolerance for [`cg_solve`].
pub const CG_DEFAULT_TOL: f64 = 1e-10;

/// A symmetric linear map `v ↦ Hv` known only through its action.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matvec(v)
    }
}

/// Default iteration budget `10·p`.
pub fn default_max_iter(op: &dyn LinearOperator) -> usize {
    10 * op.dim().max(1)
}

/// Conjugate gradients from a zero initial guess.
///
/// Stops once `‖op(v) − rhs‖ ≤ tol · ‖rhs‖`, measured on the recursively
/// updated residual and confirmed against a freshly computed one.
pub fn cg_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for a {n}-dimensional operator",
            rhs.len()
        )));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidConfig("CG tolerance must be positive".into()));
    }
    let rhs_norm = norm2(rhs);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let target = tol * rhs_norm;
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        let ap = op.apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                index: 0,
                pivot: pap,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            // guard against drift between the recursive and the true residual
            let ax = op.apply(&x);
            let true_r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            if norm2(&true_r) <= target {
                return Ok(x);
            }
            r = true_r;
            rr = dot(&r, &r);
            p = r.clone();
            continue;
        }
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    Err(Error::NoConvergence(rr.sqrt() / rhs_norm))
}
