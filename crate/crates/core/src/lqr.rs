//! Riccati-side quantities at the fitted model: the stabilizing DARE
//! solution, the gain and closed loop, the gradient of `Tr(P(θ)Σ)` and of
//! the residual channel, and the shared Hessian solves reused by every
//! per-trajectory score.

use crate::error::{Error, Result};
use crate::linalg::{dot, lqr_gain, solve_dare, solve_dlyap, Matrix, STABILITY_MARGIN};
use crate::sysid::{ModelFit, Solver};

/// Cached quantities shared by all per-trajectory scores.
#[derive(Debug, Clone)]
pub struct RiccatiArtifacts {
    pub p0: Matrix,
    pub k0: Matrix,
    pub acl: Matrix,
    /// Covariance the gradient was taken against (normally `Ŵ`).
    pub sigma: Matrix,
    /// `∇_θ Tr(P(θ)Σ)` at `θ̂`.
    pub zeta: Vec<f64>,
    /// `(2/M) Σ Φᵀ P0 e`; zero when the residual channel is switched off.
    pub h: Vec<f64>,
    /// `H⁻¹ ζ`.
    pub v_fixed: Vec<f64>,
    /// `H⁻¹ (ζ − h)`.
    pub v_stoch: Vec<f64>,
    pub c_fixed: f64,
    pub c_stoch: f64,
    /// Plug-in cost `Tr(P0 Σ)`.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactOptions {
    pub solver: Solver,
    pub residual_channel: bool,
}

impl Default for ArtifactOptions {
    fn default() -> Self {
        Self {
            solver: Solver::Dense,
            residual_channel: true,
        }
    }
}

/// Builds the artifacts at `θ̂` for covariance `sigma` with the dense solver.
pub fn riccati_artifacts(
    fit: &ModelFit,
    q: &Matrix,
    r: &Matrix,
    sigma: &Matrix,
) -> Result<RiccatiArtifacts> {
    riccati_artifacts_with(fit, q, r, sigma, ArtifactOptions::default())
}

pub fn riccati_artifacts_with(
    fit: &ModelFit,
    q: &Matrix,
    r: &Matrix,
    sigma: &Matrix,
    opts: ArtifactOptions,
) -> Result<RiccatiArtifacts> {
    let n_x = fit.n_x();
    if sigma.rows() != n_x || sigma.cols() != n_x {
        return Err(Error::DimensionMismatch("Σ must be n_x × n_x".into()));
    }
    let a = fit.a_hat();
    let b = fit.b_hat();
    let p0 = solve_dare(&a, &b, q, r)?;
    let k0 = lqr_gain(&a, &b, r, &p0)?;
    let acl = &a - &(&b * &k0);
    let zeta = riccati_gradient(&a, &b, &p0, &k0, &acl, sigma)?;
    let h = if opts.residual_channel {
        residual_channel_gradient(fit, &p0)?
    } else {
        vec![0.0; fit.n_params()]
    };
    let v_fixed = fit.solve_hessian(&zeta, opts.solver)?;
    let corrected: Vec<f64> = zeta.iter().zip(&h).map(|(z, hh)| z - hh).collect();
    let v_stoch = fit.solve_hessian(&corrected, opts.solver)?;
    let lambda = fit.lambda();
    let c_fixed = lambda * dot(fit.theta(), &v_fixed);
    let c_stoch = lambda * dot(fit.theta(), &v_stoch);
    let cost = plug_in_cost(&p0, sigma)?;
    Ok(RiccatiArtifacts {
        p0,
        k0,
        acl,
        sigma: sigma.clone(),
        zeta,
        h,
        v_fixed,
        v_stoch,
        c_fixed,
        c_stoch,
        cost,
    })
}

impl RiccatiArtifacts {
    /// `ζ − h`, the gradient paired with `IFᵐ_k` in the stochastic score.
    pub fn corrected_gradient(&self) -> Vec<f64> {
        self.zeta.iter().zip(&self.h).map(|(z, h)| z - h).collect()
    }
}

/// Gradient of `θ ↦ Tr(P(θ)Σ)` at the point encoded by `(A, B)`.
///
/// With `Λ − Acl Λ Aclᵀ = Σ`, the optimal-gain envelope gives the blocks
/// `∂/∂A = 2 P0 Acl Λ` and `∂/∂B = −2 P0 Acl Λ K0ᵀ`, stacked as
/// `vec([∂A ∂B])`.
pub fn riccati_gradient(
    a: &Matrix,
    b: &Matrix,
    p0: &Matrix,
    k0: &Matrix,
    acl: &Matrix,
    sigma: &Matrix,
) -> Result<Vec<f64>> {
    let n_x = a.rows();
    if b.rows() != n_x || p0.rows() != n_x || acl.rows() != n_x || k0.cols() != n_x {
        return Err(Error::DimensionMismatch("riccati_gradient operands".into()));
    }
    let lambda = solve_dlyap(acl, sigma)?;
    let grad_a = (&(p0 * acl) * &lambda).scale(2.0);
    let grad_b = -&(&grad_a * &k0.transpose());
    Ok(grad_a.hstack(&grad_b)?.vec())
}

/// `h = (2/M) Σ Φ_sᵀ P0 e_s = 2 vec(P0 · (1/M) Σ e_s z_sᵀ)`.
pub fn residual_channel_gradient(fit: &ModelFit, p0: &Matrix) -> Result<Vec<f64>> {
    let n_x = fit.n_x();
    if p0.rows() != n_x || p0.cols() != n_x {
        return Err(Error::DimensionMismatch("P0 must be n_x × n_x".into()));
    }
    let nz = n_x + fit.n_u();
    let mut ez = Matrix::zeros(n_x, nz);
    for (e, z) in fit.residuals().iter().zip(fit.regressors()) {
        for i in 0..n_x {
            for j in 0..nz {
                ez[(i, j)] += e[i] * z[j];
            }
        }
    }
    let scale = 2.0 / fit.total_transitions() as f64;
    Ok((p0 * &ez).scale(scale).vec())
}

/// `Tr(P Σ)`.
pub fn plug_in_cost(p: &Matrix, sigma: &Matrix) -> Result<f64> {
    if p.rows() != sigma.cols() || p.cols() != sigma.rows() {
        return Err(Error::DimensionMismatch("plug-in cost operands".into()));
    }
    let mut t = 0.0;
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            t += p[(i, j)] * sigma[(j, i)];
        }
    }
    Ok(t)
}

/// Both sides of the stationary average-cost identity:
/// `Tr((Q + KᵀRK) Σ_ss)` with `Σ_ss = Acl Σ_ss Aclᵀ + W`, and `Tr(P0 W)`.
pub fn stationary_cost_check(
    a: &Matrix,
    b: &Matrix,
    k0: &Matrix,
    q: &Matrix,
    r: &Matrix,
    w: &Matrix,
    p0: &Matrix,
) -> Result<(f64, f64)> {
    let acl = a - &(b * k0);
    let rho = acl.spectral_radius();
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableClosedLoop(rho));
    }
    let sigma_ss = solve_dlyap(&acl, w)?;
    let stage = q + &(&(&k0.transpose() * r) * k0);
    Ok((plug_in_cost(&stage, &sigma_ss)?, plug_in_cost(p0, w)?))
}

/// Splits `θ = vec([A B])` into `(A, B)`.
pub fn split_theta(theta: &[f64], n_x: usize, n_u: usize) -> Result<(Matrix, Matrix)> {
    let ab = Matrix::from_col_major(n_x, n_x + n_u, theta)?;
    Ok((ab.columns(0, n_x), ab.columns(n_x, n_x + n_u)))
}

/// Stabilizing DARE solution at the model encoded by `θ`.
pub fn riccati_solution_at(
    theta: &[f64],
    n_x: usize,
    n_u: usize,
    q: &Matrix,
    r: &Matrix,
) -> Result<Matrix> {
    let (a, b) = split_theta(theta, n_x, n_u)?;
    solve_dare(&a, &b, q, r)
}

/// `Tr(P(θ) Σ)`, re-solving the DARE at `θ`.
pub fn riccati_cost_at(
    theta: &[f64],
    n_x: usize,
    n_u: usize,
    q: &Matrix,
    r: &Matrix,
    sigma: &Matrix,
) -> Result<f64> {
    plug_in_cost(&riccati_solution_at(theta, n_x, n_u, q, r)?, sigma)
}
