use crate::linalg::Matrix;

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &Matrix) -> Matrix {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.rows();
    let norm = a.frobenius_norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale(0.5_f64.powi(squarings as i32));
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=24 {
        term = (&term * &scaled).scale(1.0 / k as f64);
        sum = &sum + &term;
        if term.frobenius_norm() <= 1e-18 * sum.frobenius_norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}
