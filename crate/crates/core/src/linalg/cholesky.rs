use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Lower-triangular Cholesky factor `L` with `H = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor {
    l: Matrix,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// Solves `H x = rhs` with one forward and one backward substitution.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for a {n}-dimensional factor",
                rhs.len()
            )));
        }
        let l = &self.l;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= l[(i, j)] * y[j];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= l[(j, i)] * y[j];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }

    /// Solves `H X = rhs` column by column.
    pub fn solve_matrix(&self, rhs: &Matrix) -> Result<Matrix> {
        if rhs.rows() != self.dim() {
            return Err(Error::DimensionMismatch("matrix rhs rows".into()));
        }
        let mut out = Matrix::zeros(rhs.rows(), rhs.cols());
        for j in 0..rhs.cols() {
            let col: Vec<f64> = (0..rhs.rows()).map(|i| rhs[(i, j)]).collect();
            let x = self.solve(&col)?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// `log det H`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.l[(i, i)].ln()).sum()
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to
/// `1e-14 × max diagonal` or below.
pub fn cholesky_factor(h: &Matrix) -> Result<SpdFactor> {
    if !h.is_square() || h.rows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            h.rows(),
            h.cols()
        )));
    }
    if h.asymmetry() > 1e-10 {
        return Err(Error::DegenerateInput(format!(
            "matrix asymmetry {:e} exceeds 1e-10",
            h.asymmetry()
        )));
    }
    let n = h.rows();
    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(h[(i, i)]));
    let floor = 1e-14 * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= floor || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = 0.5 * (h[(i, j)] + h[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(SpdFactor { l })
}

/// Convenience wrapper: factor and solve in one call.
pub fn solve_spd(factor: &SpdFactor, rhs: &[f64]) -> Result<Vec<f64>> {
    factor.solve(rhs)
}

/// Solves a general square system by LU with partial pivoting.
pub fn lu_solve(a: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || rhs.len() != n {
        return Err(Error::DimensionMismatch("lu_solve shapes".into()));
    }
    let mut m = a.clone();
    let mut b = rhs.to_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs()))
            .unwrap();
        if m[(piv, col)].abs() <= 1e-15 * scale {
            return Err(Error::Singular);
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            b.swap(col, piv);
        }
        let d = m[(col, col)];
        for i in (col + 1)..n {
            let f = m[(i, col)] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(i, j)] -= f * m[(col, j)];
            }
            b[i] -= f * b[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= m[(i, j)] * b[j];
        }
        b[i] = s / m[(i, i)];
    }
    Ok(b)
}
