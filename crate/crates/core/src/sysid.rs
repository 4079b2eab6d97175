//! Trajectory datasets, ridge least-squares identification of `[A B]`, and
//! the per-trajectory quantities that the influence scores are built from.
//!
//! Parameters are `θ = vec([A B])` stacked column-major, so that the
//! regressor of a transition with `z = (x; u)` is `Φ = zᵀ ⊗ I_{n_x}` and
//! `Φθ = A x + B u`. Regressors are never materialized in the fit: every sum
//! over `ΦᵀΦ` or `Φᵀv` is reduced to the `(n_x+n_u)²` Gram matrix of `z`.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, cholesky_factor, dot, LinearOperator, Matrix, SpdFactor};

/// One observed step `(x, u) → x⁺`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub x_next: Vec<f64>,
}

impl Transition {
    /// Stacked regressor `z = (x; u)`.
    pub fn z(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.x.len() + self.u.len());
        z.extend_from_slice(&self.x);
        z.extend_from_slice(&self.u);
        z
    }
}

pub type Trajectory = Vec<Transition>;

/// Ordered trajectories sharing the state and input dimensions.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct TrajectoryDataset {
    n_x: usize,
    n_u: usize,
    trajectories: Vec<Trajectory>,
}

#[derive(Deserialize)]
struct RawDataset {
    n_x: usize,
    n_u: usize,
    trajectories: Vec<Trajectory>,
}

impl TryFrom<RawDataset> for TrajectoryDataset {
    type Error = Error;
    fn try_from(raw: RawDataset) -> Result<Self> {
        TrajectoryDataset::new(raw.n_x, raw.n_u, raw.trajectories)
    }
}

impl TrajectoryDataset {
    pub fn new(n_x: usize, n_u: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        if n_x == 0 {
            return Err(Error::InvalidDataset("n_x must be positive".into()));
        }
        if trajectories.is_empty() {
            return Err(Error::InvalidDataset("no trajectories".into()));
        }
        for (k, traj) in trajectories.iter().enumerate() {
            if traj.is_empty() {
                return Err(Error::InvalidDataset(format!("trajectory {k} is empty")));
            }
            for (t, tr) in traj.iter().enumerate() {
                if tr.x.len() != n_x || tr.u.len() != n_u || tr.x_next.len() != n_x {
                    return Err(Error::InvalidDataset(format!(
                        "transition {t} of trajectory {k} has wrong dimensions"
                    )));
                }
                let finite =
                    tr.x.iter()
                        .chain(&tr.u)
                        .chain(&tr.x_next)
                        .all(|v| v.is_finite());
                if !finite {
                    return Err(Error::InvalidDataset(format!(
                        "transition {t} of trajectory {k} is not finite"
                    )));
                }
            }
        }
        Ok(Self {
            n_x,
            n_u,
            trajectories,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// `p = n_x (n_x + n_u)`.
    pub fn n_params(&self) -> usize {
        self.n_x * (self.n_x + self.n_u)
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, k: usize) -> Result<&[Transition]> {
        self.trajectories
            .get(k)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: k,
                len: self.trajectories.len(),
            })
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.trajectories.iter().map(Vec::len).collect()
    }

    /// Total transition count `M`.
    pub fn total_transitions(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flatten()
    }

    /// Checks that no single trajectory holds every transition.
    pub fn check_no_dominant(&self) -> Result<()> {
        let m = self.total_transitions();
        match self.trajectories.iter().position(|t| t.len() >= m) {
            Some(k) => Err(Error::DominantTrajectory(k)),
            None => Ok(()),
        }
    }

    /// Copy of the dataset with trajectory `k` removed.
    pub fn without(&self, k: usize) -> Result<Self> {
        self.trajectory(k)?;
        if self.trajectories.len() < 2 {
            return Err(Error::SingleTrajectory);
        }
        let trajectories = self
            .trajectories
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, t)| t.clone())
            .collect();
        Ok(Self {
            n_x: self.n_x,
            n_u: self.n_u,
            trajectories,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidDataset(e.to_string()))
    }

    /// JSON with every number written to 17 significant digits.
    pub fn to_json_string(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
        self.serialize(&mut ser)
            .expect("serializing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

impl Serialize for TrajectoryDataset {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("TrajectoryDataset", 3)?;
        s.serialize_field("n_x", &self.n_x)?;
        s.serialize_field("n_u", &self.n_u)?;
        s.serialize_field("trajectories", &self.trajectories)?;
        s.end()
    }
}

/// `serde_json` formatter writing floats as `d.dddddddddddddddde±x`.
pub struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Materialized regressor `Φ = (x; u)ᵀ ⊗ I_{n_x}`, an `n_x × p` matrix.
pub fn build_regressor(n_x: usize, n_u: usize, x: &[f64], u: &[f64]) -> Result<Matrix> {
    if x.len() != n_x || u.len() != n_u {
        return Err(Error::DimensionMismatch(format!(
            "regressor for n_x={n_x}, n_u={n_u} given x of length {} and u of length {}",
            x.len(),
            u.len()
        )));
    }
    let z: Vec<f64> = x.iter().chain(u).copied().collect();
    Ok(Matrix::from_rows(&[&z]).kron(&Matrix::identity(n_x)))
}

/// `Φᵀ v = vec(v zᵀ)` without forming `Φ`.
pub fn regressor_transpose_apply(z: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len() * v.len());
    for &zj in z {
        out.extend(v.iter().map(|vi| zj * vi));
    }
    out
}

/// `Φ θ = [A B] z` without forming `Φ`.
pub fn regressor_apply(z: &[f64], theta: &[f64], n_x: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_x];
    for (j, &zj) in z.iter().enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            *o += theta[j * n_x + i] * zj;
        }
    }
    out
}

/// How the shared Hessian systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Dense,
    Cg,
}

/// Relative residual tolerance of the CG path when it stands in for the
/// dense solve.
pub const CG_SCORE_TOL: f64 = 1e-14;

/// Hessian-vector products `Hv = vec(V G) + λv` with `V` the `n_x × n_z`
/// reshaping of `v` and `G = (1/M) Σ z zᵀ`.
#[derive(Debug, Clone, Copy)]
pub struct HessianOperator<'a> {
    gram: &'a Matrix,
    lambda: f64,
    n_x: usize,
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.n_x * self.gram.rows()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let nz = self.gram.rows();
        let mut out: Vec<f64> = v.iter().map(|x| self.lambda * x).collect();
        for j in 0..nz {
            for l in 0..nz {
                let g = self.gram[(l, j)];
                if g == 0.0 {
                    continue;
                }
                for i in 0..self.n_x {
                    out[j * self.n_x + i] += v[l * self.n_x + i] * g;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Accumulated {
    gram: Matrix,
    cross: Matrix,
    m: usize,
}

fn accumulate<'a>(
    n_x: usize,
    n_u: usize,
    trajs: impl Iterator<Item = &'a Trajectory>,
) -> Accumulated {
    let nz = n_x + n_u;
    let mut gram = Matrix::zeros(nz, nz);
    let mut cross = Matrix::zeros(n_x, nz);
    let mut m = 0;
    for tr in trajs.flatten() {
        let z = tr.z();
        for a in 0..nz {
            for b in 0..nz {
                gram[(a, b)] += z[a] * z[b];
            }
            for i in 0..n_x {
                cross[(i, a)] += tr.x_next[i] * z[a];
            }
        }
        m += 1;
    }
    let inv = 1.0 / m as f64;
    Accumulated {
        gram: gram.scale(inv).symmetrize(),
        cross: cross.scale(inv),
        m,
    }
}

fn hessian_from_gram(gram: &Matrix, n_x: usize, lambda: f64) -> Matrix {
    let mut h = gram.kron(&Matrix::identity(n_x));
    for i in 0..h.rows() {
        h[(i, i)] += lambda;
    }
    h
}

fn solve_ridge<'a, I>(
    n_x: usize,
    n_u: usize,
    trajs: I,
    lambda: f64,
) -> Result<(Accumulated, Matrix, SpdFactor, Vec<f64>)>
where
    I: Iterator<Item = &'a Trajectory>,
{
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "ridge weight {lambda} must be ≥ 0"
        )));
    }
    let acc = accumulate(n_x, n_u, trajs);
    let h = hessian_from_gram(&acc.gram, n_x, lambda);
    let factor = cholesky_factor(&h)?;
    let theta = factor.solve(&acc.cross.vec())?;
    Ok((acc, h, factor, theta))
}

/// Residual covariance `(1/M) Σ e(θ) e(θ)ᵀ` over every transition of `data`.
pub fn residual_covariance(data: &TrajectoryDataset, theta: &[f64]) -> Matrix {
    let n_x = data.n_x();
    let mut w = Matrix::zeros(n_x, n_x);
    for tr in data.transitions() {
        let e = residual(tr, theta, n_x);
        for a in 0..n_x {
            for b in 0..n_x {
                w[(a, b)] += e[a] * e[b];
            }
        }
    }
    w.scale(1.0 / data.total_transitions() as f64).symmetrize()
}

fn residual(tr: &Transition, theta: &[f64], n_x: usize) -> Vec<f64> {
    let pred = regressor_apply(&tr.z(), theta, n_x);
    tr.x_next.iter().zip(&pred).map(|(a, b)| a - b).collect()
}

/// Full-data ridge fit together with residual statistics and trajectory
/// gradients. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ModelFit {
    n_x: usize,
    n_u: usize,
    lambda: f64,
    theta: Vec<f64>,
    gram: Matrix,
    hessian: Matrix,
    factor: SpdFactor,
    lengths: Vec<usize>,
    offsets: Vec<usize>,
    regressors: Vec<Vec<f64>>,
    residuals: Vec<Vec<f64>>,
    w_hat: Matrix,
    per_traj_cov: Vec<Matrix>,
    grads: Vec<Vec<f64>>,
}

/// Fits `θ̂ = argmin (1/2M) Σ ‖x⁺ − Φθ‖² + (λ/2)‖θ‖²`.
pub fn fit_ridge(data: &TrajectoryDataset, lambda: f64) -> Result<ModelFit> {
    let (n_x, n_u) = (data.n_x(), data.n_u());
    let (acc, hessian, factor, theta) = solve_ridge(n_x, n_u, data.trajectories().iter(), lambda)?;
    let m = acc.m as f64;
    let nz = n_x + n_u;

    let mut regressors = Vec::with_capacity(acc.m);
    let mut residuals = Vec::with_capacity(acc.m);
    let mut offsets = Vec::with_capacity(data.num_trajectories() + 1);
    let mut sums = Vec::with_capacity(data.num_trajectories());
    let mut grads = Vec::with_capacity(data.num_trajectories());
    offsets.push(0);
    for traj in data.trajectories() {
        let mut s = Matrix::zeros(n_x, n_x);
        let mut ez = Matrix::zeros(n_x, nz);
        for tr in traj {
            let z = tr.z();
            let e = residual(tr, &theta, n_x);
            for a in 0..n_x {
                for b in 0..n_x {
                    s[(a, b)] += e[a] * e[b];
                }
                for j in 0..nz {
                    ez[(a, j)] += e[a] * z[j];
                }
            }
            regressors.push(z);
            residuals.push(e);
        }
        offsets.push(regressors.len());
        grads.push(ez.scale(-1.0 / m).vec());
        sums.push(s);
    }
    let total = sums.iter().fold(Matrix::zeros(n_x, n_x), |acc, s| &acc + s);
    let w_hat = total.scale(1.0 / m).symmetrize();
    let per_traj_cov = sums
        .iter()
        .zip(data.lengths())
        .map(|(s, t)| s.scale(1.0 / t as f64).symmetrize())
        .collect();

    Ok(ModelFit {
        n_x,
        n_u,
        lambda,
        theta,
        gram: acc.gram,
        hessian,
        factor,
        lengths: data.lengths(),
        offsets,
        regressors,
        residuals,
        w_hat,
        per_traj_cov,
        grads,
    })
}

impl ModelFit {
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `[Â B̂]` as an `n_x × (n_x + n_u)` matrix.
    pub fn theta_matrix(&self) -> Matrix {
        Matrix::from_col_major(self.n_x, self.n_x + self.n_u, &self.theta).expect("θ has p entries")
    }

    pub fn a_hat(&self) -> Matrix {
        self.theta_matrix().columns(0, self.n_x)
    }

    pub fn b_hat(&self) -> Matrix {
        self.theta_matrix().columns(self.n_x, self.n_x + self.n_u)
    }

    /// `(1/M) Σ z zᵀ`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// Materialized `H = (1/M) Σ ΦᵀΦ + λI`.
    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn hessian_factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn hessian_operator(&self) -> HessianOperator<'_> {
        HessianOperator {
            gram: &self.gram,
            lambda: self.lambda,
            n_x: self.n_x,
        }
    }

    /// Solves `H v = rhs` on the requested path.
    pub fn solve_hessian(&self, rhs: &[f64], solver: Solver) -> Result<Vec<f64>> {
        match solver {
            Solver::Dense => self.factor.solve(rhs),
            Solver::Cg => {
                let op = self.hessian_operator();
                let max_iter = 10 * op.dim();
                cg_solve(&op, rhs, CG_SCORE_TOL, max_iter)
            }
        }
    }

    pub fn num_trajectories(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// `M`.
    pub fn total_transitions(&self) -> usize {
        self.regressors.len()
    }

    pub fn regressors(&self) -> &[Vec<f64>] {
        &self.regressors
    }

    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    /// Index range of trajectory `k` within [`Self::residuals`].
    pub fn transition_range(&self, k: usize) -> Result<std::ops::Range<usize>> {
        self.check_index(k)?;
        Ok(self.offsets[k]..self.offsets[k + 1])
    }

    /// `Ŵ = (1/M) Σ e eᵀ`.
    pub fn w_hat(&self) -> &Matrix {
        &self.w_hat
    }

    /// `W̄_k = (1/T_k) Σ_{s∈𝓘_k} e eᵀ`.
    pub fn per_trajectory_covariance(&self, k: usize) -> Result<&Matrix> {
        self.check_index(k)?;
        Ok(&self.per_traj_cov[k])
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k < self.lengths.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: k,
                len: self.lengths.len(),
            })
        }
    }

    /// `(M, T_k, M − T_k)` as reals, rejecting a dominant trajectory.
    pub(crate) fn counts(&self, k: usize) -> Result<(f64, f64, f64)> {
        self.check_index(k)?;
        let m = self.total_transitions();
        let t = self.lengths[k];
        if t >= m {
            return Err(Error::DominantTrajectory(k));
        }
        Ok((m as f64, t as f64, (m - t) as f64))
    }

    /// Norm of `−(1/M) Σ Φᵀe + λθ̂`.
    pub fn stationarity_residual(&self) -> f64 {
        let sum = self
            .grads
            .iter()
            .fold(vec![0.0; self.n_params()], |acc, g| {
                acc.iter().zip(g).map(|(a, b)| a + b).collect()
            });
        sum.iter()
            .zip(&self.theta)
            .map(|(g, t)| (g + self.lambda * t).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `g_k = −(1/M) Σ_{s∈𝓘_k} Φ_sᵀ e_s`.
pub fn trajectory_gradient(fit: &ModelFit, k: usize) -> Result<&[f64]> {
    fit.check_index(k)?;
    Ok(&fit.grads[k])
}

/// `η_k = (M/M_∖k) g_k + (T_k/M_∖k) λθ̂`.
pub fn eta(fit: &ModelFit, k: usize) -> Result<Vec<f64>> {
    let (m, t, m_rest) = fit.counts(k)?;
    let g = &fit.grads[k];
    let ridge = t / m_rest * fit.lambda;
    Ok(g.iter()
        .zip(&fit.theta)
        .map(|(gi, th)| m / m_rest * gi + ridge * th)
        .collect())
}

/// `η_k` and, on request, `IFᵐ_k = H⁻¹η_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfluence {
    pub eta: Vec<f64>,
    pub if_m: Option<Vec<f64>>,
}

/// Model-side influence `IFᵐ_k = H⁻¹ η_k`.
pub fn model_influence(fit: &ModelFit, k: usize) -> Result<Vec<f64>> {
    fit.factor.solve(&eta(fit, k)?)
}

pub fn model_influence_full(fit: &ModelFit, k: usize, materialize: bool) -> Result<ModelInfluence> {
    let eta = eta(fit, k)?;
    let if_m = if materialize {
        Some(fit.factor.solve(&eta)?)
    } else {
        None
    };
    Ok(ModelInfluence { eta, if_m })
}

/// `T_k/M_∖k · (Ŵ − W̄_k)`: the exact covariance change from dropping
/// trajectory `k`'s residuals at fixed parameters.
pub fn covariance_direct_term(fit: &ModelFit, k: usize) -> Result<Matrix> {
    let (_, t, m_rest) = fit.counts(k)?;
    Ok((&fit.w_hat - &fit.per_traj_cov[k]).scale(t / m_rest))
}

/// Renormalized leave-one-trajectory-out refit.
#[derive(Debug, Clone)]
pub struct LotoRefit {
    pub theta: Vec<f64>,
    /// Residual covariance over the retained transitions at the refit.
    pub w: Matrix,
}

/// Refits on every trajectory except `k` with normalization `1/M_∖k`.
pub fn loto_refit(data: &TrajectoryDataset, lambda: f64, k: usize) -> Result<LotoRefit> {
    data.trajectory(k)?;
    if data.num_trajectories() < 2 {
        return Err(Error::SingleTrajectory);
    }
    let (n_x, n_u) = (data.n_x(), data.n_u());
    let retained = || {
        data.trajectories()
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != k)
            .map(|(_, t)| t)
    };
    let (acc, _, _, theta) = solve_ridge(n_x, n_u, retained(), lambda)?;
    let mut w = Matrix::zeros(n_x, n_x);
    for tr in retained().flatten() {
        let e = residual(tr, &theta, n_x);
        for a in 0..n_x {
            for b in 0..n_x {
                w[(a, b)] += e[a] * e[b];
            }
        }
    }
    let w = w.scale(1.0 / acc.m as f64).symmetrize();
    Ok(LotoRefit { theta, w })
}

/// Direct-summation gradient of the renormalized reduced objective
/// `F_∖k(θ) = (1/2M_∖k) Σ_{i≠k} Σ ‖x⁺ − Φθ‖² + (λ/2)‖θ‖²`.
pub fn loto_objective_gradient(
    data: &TrajectoryDataset,
    lambda: f64,
    k: usize,
    theta: &[f64],
) -> Result<Vec<f64>> {
    data.trajectory(k)?;
    let n_x = data.n_x();
    let mut grad = vec![0.0; data.n_params()];
    let mut m_rest = 0usize;
    for (i, traj) in data.trajectories().iter().enumerate() {
        if i == k {
            continue;
        }
        for tr in traj {
            let e = residual(tr, theta, n_x);
            let contrib = regressor_transpose_apply(&tr.z(), &e);
            for (g, c) in grad.iter_mut().zip(&contrib) {
                *g -= c;
            }
            m_rest += 1;
        }
    }
    if m_rest == 0 {
        return Err(Error::DominantTrajectory(k));
    }
    let inv = 1.0 / m_rest as f64;
    Ok(grad
        .iter()
        .zip(theta)
        .map(|(g, t)| g * inv + lambda * t)
        .collect())
}

/// `(1/2N) Σ ‖x⁺ − Φθ‖²` over every transition of `data`.
pub fn prediction_loss(data: &TrajectoryDataset, theta: &[f64]) -> f64 {
    let n_x = data.n_x();
    let total: f64 = data
        .transitions()
        .map(|tr| {
            let e = residual(tr, theta, n_x);
            dot(&e, &e)
        })
        .sum();
    0.5 * total / data.total_transitions() as f64
}

/// `∇ (1/2N) Σ ‖x⁺ − Φθ‖² = −(1/N) Σ Φᵀe`.
pub fn prediction_loss_gradient(data: &TrajectoryDataset, theta: &[f64]) -> Vec<f64> {
    let n_x = data.n_x();
    let mut grad = vec![0.0; data.n_params()];
    for tr in data.transitions() {
        let e = residual(tr, theta, n_x);
        let c = regressor_transpose_apply(&tr.z(), &e);
        for (g, v) in grad.iter_mut().zip(&c) {
            *g -= v;
        }
    }
    let inv = 1.0 / data.total_transitions() as f64;
    grad.iter().map(|g| g * inv).collect()
}
