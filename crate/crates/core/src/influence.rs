//! Per-trajectory control influence scores and the exact leave-one-out
//! decomposition used to audit them.
//!
//! The fixed-covariance score pairs the Riccati gradient with the model-side
//! shift; the stochastic score additionally follows the residual channel and
//! the exact direct-removal change of the covariance estimate. Both are
//! evaluated in amortized form: one shared Hessian solve, then a dot product
//! per trajectory.

use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, solve_dare, Matrix};
use crate::lqr::{plug_in_cost, riccati_solution_at, RiccatiArtifacts};
use crate::sysid::{
    covariance_direct_term, fit_ridge, loto_refit, model_influence, regressor_apply,
    trajectory_gradient, ModelFit, TrajectoryDataset,
};

/// Whether the covariance entering the cost is re-estimated from residuals
/// or treated as known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceChannel {
    #[default]
    Estimated,
    Known,
}

/// `IF^fixed_k = (M/M_∖k) g_kᵀ v_fixed + (T_k/M_∖k) c_fixed`.
pub fn fixed_score(fit: &ModelFit, art: &RiccatiArtifacts, k: usize) -> Result<f64> {
    let (m, t, m_rest) = fit.counts(k)?;
    let g = trajectory_gradient(fit, k)?;
    Ok(m / m_rest * dot(g, &art.v_fixed) + t / m_rest * art.c_fixed)
}

/// `T_k/M_∖k · Tr(P0 (Ŵ − W̄_k))`.
pub fn direct_trace(fit: &ModelFit, art: &RiccatiArtifacts, k: usize) -> Result<f64> {
    plug_in_cost(&art.p0, &covariance_direct_term(fit, k)?)
}

/// Stochastic score with the covariance re-estimated from residuals.
pub fn stochastic_score(fit: &ModelFit, art: &RiccatiArtifacts, k: usize) -> Result<f64> {
    stochastic_score_with(fit, art, k, CovarianceChannel::Estimated)
}

/// `IF^stoch_k = (M/M_∖k) g_kᵀ v_stoch + (T_k/M_∖k) c_stoch + direct trace`.
///
/// With [`CovarianceChannel::Known`] the direct-removal term is dropped;
/// artifacts built without the residual channel then reproduce
/// [`fixed_score`].
pub fn stochastic_score_with(
    fit: &ModelFit,
    art: &RiccatiArtifacts,
    k: usize,
    channel: CovarianceChannel,
) -> Result<f64> {
    let (m, t, m_rest) = fit.counts(k)?;
    let g = trajectory_gradient(fit, k)?;
    let first_order = m / m_rest * dot(g, &art.v_stoch) + t / m_rest * art.c_stoch;
    match channel {
        CovarianceChannel::Estimated => Ok(first_order + direct_trace(fit, art, k)?),
        CovarianceChannel::Known => Ok(first_order),
    }
}

/// `ζᵀ IFᵐ_k` with the model influence solved explicitly.
pub fn fixed_score_explicit(fit: &ModelFit, art: &RiccatiArtifacts, k: usize) -> Result<f64> {
    Ok(dot(&art.zeta, &model_influence(fit, k)?))
}

/// `(ζ − h)ᵀ IFᵐ_k + direct trace` with the model influence solved explicitly.
pub fn stochastic_score_explicit(fit: &ModelFit, art: &RiccatiArtifacts, k: usize) -> Result<f64> {
    let if_m = model_influence(fit, k)?;
    Ok(dot(&art.corrected_gradient(), &if_m) + direct_trace(fit, art, k)?)
}

/// Amortized scores of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub if_fixed: f64,
    pub if_stoch: f64,
    pub direct_trace: f64,
}

/// Scores every trajectory from shared artifacts.
pub fn score_all(fit: &ModelFit, art: &RiccatiArtifacts) -> Result<Vec<Scores>> {
    (0..fit.num_trajectories())
        .map(|k| {
            let direct = direct_trace(fit, art, k)?;
            let (m, t, m_rest) = fit.counts(k)?;
            let g = trajectory_gradient(fit, k)?;
            let if_fixed = m / m_rest * dot(g, &art.v_fixed) + t / m_rest * art.c_fixed;
            let if_stoch = m / m_rest * dot(g, &art.v_stoch) + t / m_rest * art.c_stoch + direct;
            Ok(Scores {
                if_fixed,
                if_stoch,
                direct_trace: direct,
            })
        })
        .collect()
}

/// `Tr(P(θ̂_∖k) Ŵ_∖k) − Tr(P0 Ŵ)` with both sides recomputed from data.
pub fn exact_loto_cost_shift(
    data: &TrajectoryDataset,
    lambda: f64,
    q: &Matrix,
    r: &Matrix,
    k: usize,
) -> Result<f64> {
    let fit = fit_ridge(data, lambda)?;
    let base = plug_in_cost(&solve_dare(&fit.a_hat(), &fit.b_hat(), q, r)?, fit.w_hat())?;
    exact_loto_cost_shift_from(data, lambda, q, r, k, base)
}

/// Same as [`exact_loto_cost_shift`] against a precomputed full-data cost.
pub fn exact_loto_cost_shift_from(
    data: &TrajectoryDataset,
    lambda: f64,
    q: &Matrix,
    r: &Matrix,
    k: usize,
    base_cost: f64,
) -> Result<f64> {
    let refit = loto_refit(data, lambda, k)?;
    let p = riccati_solution_at(&refit.theta, data.n_x(), data.n_u(), q, r)?;
    Ok(plug_in_cost(&p, &refit.w)? - base_cost)
}

/// Optional Lipschitz constants for the Riccati and cross remainders.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, serde::Deserialize)]
pub struct RemainderConstants {
    pub l_psi: Option<f64>,
    pub l_p: Option<f64>,
}

/// Exact decomposition of one leave-one-out cost shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionDiagnostics {
    pub k: usize,
    pub delta_j: f64,
    /// `(ζ − h)ᵀ δθ_k`.
    pub linear_term: f64,
    pub direct_trace: f64,
    pub r_ric: f64,
    pub r_w: f64,
    pub r_cross: f64,
    /// `‖R^W_k‖_F`.
    pub r_w_frobenius: f64,
    /// `L_Φ² ‖δθ‖² + 4 (T_k/M) L_e L_Φ ‖δθ‖`.
    pub bound_w: f64,
    /// `‖P0‖₂ · bound_w`.
    pub bound_r_w: f64,
    pub bound_ric: Option<f64>,
    pub bound_cross: Option<f64>,
    pub delta_theta_norm: f64,
    #[serde(skip)]
    pub delta_theta: Vec<f64>,
}

impl DecompositionDiagnostics {
    /// `ΔĴ_k` minus the sum of the five decomposition terms.
    pub fn bookkeeping_residual(&self) -> f64 {
        self.delta_j - (self.linear_term + self.direct_trace + self.r_ric + self.r_w + self.r_cross)
    }

    /// Magnitude scale for relative comparisons of the bookkeeping identity.
    pub fn scale(&self) -> f64 {
        self.delta_j.abs()
            + self.linear_term.abs()
            + self.direct_trace.abs()
            + self.r_ric.abs()
            + self.r_w.abs()
            + self.r_cross.abs()
    }
}

/// Per-dataset constants `L_Φ = max ‖Φ_s‖₂ = max ‖z_s‖` and `L_e = max ‖e_s‖`.
pub fn data_bounds(fit: &ModelFit) -> (f64, f64) {
    let l_phi = fit
        .regressors()
        .iter()
        .map(|z| norm2(z))
        .fold(0.0, f64::max);
    let l_e = fit.residuals().iter().map(|e| norm2(e)).fold(0.0, f64::max);
    (l_phi, l_e)
}

/// Refits without trajectory `k` and splits `ΔĴ_k` into its first-order
/// part, the direct-removal trace, and the three remainders.
///
/// `art` must have been built with `Σ = Ŵ`.
pub fn decomposition_diagnostics(
    data: &TrajectoryDataset,
    fit: &ModelFit,
    art: &RiccatiArtifacts,
    q: &Matrix,
    r: &Matrix,
    k: usize,
    constants: RemainderConstants,
) -> Result<DecompositionDiagnostics> {
    let (m, t, m_rest) = fit.counts(k)?;
    let n_x = fit.n_x();
    let refit = loto_refit(data, fit.lambda(), k)?;
    let delta_theta: Vec<f64> = refit
        .theta
        .iter()
        .zip(fit.theta())
        .map(|(a, b)| a - b)
        .collect();
    let dnorm = norm2(&delta_theta);
    let p_refit = riccati_solution_at(&refit.theta, n_x, fit.n_u(), q, r)?;

    let w_hat = fit.w_hat();
    let delta_w = &refit.w - w_hat;
    let delta_p = &p_refit - &art.p0;
    let delta_j = plug_in_cost(&p_refit, &refit.w)? - plug_in_cost(&art.p0, w_hat)?;

    let r_ric = plug_in_cost(&delta_p, w_hat)? - dot(&art.zeta, &delta_theta);

    // −(1/M) Σ_s (e_s (Φ_s δθ)ᵀ + (Φ_s δθ) e_sᵀ) over all transitions
    let mut lin = Matrix::zeros(n_x, n_x);
    for (e, z) in fit.residuals().iter().zip(fit.regressors()) {
        let d = regressor_apply(z, &delta_theta, n_x);
        for a in 0..n_x {
            for b in 0..n_x {
                lin[(a, b)] -= e[a] * d[b] + d[a] * e[b];
            }
        }
    }
    let lin = lin.scale(1.0 / m);
    let direct = covariance_direct_term(fit, k)?;
    let r_w_mat = &(&delta_w - &direct) - &lin;
    let r_w = plug_in_cost(&art.p0, &r_w_mat)?;
    let r_cross = plug_in_cost(&delta_p, &delta_w)?;

    let (l_phi, l_e) = data_bounds(fit);
    let bound_w = l_phi * l_phi * dnorm * dnorm + 4.0 * (t / m) * l_e * l_phi * dnorm;
    let p0_norm = art.p0.spectral_norm();

    let bound_ric = constants.l_psi.map(|l| 0.5 * l * dnorm * dnorm);
    let r_w_frobenius = r_w_mat.frobenius_norm();
    let bound_cross = constants.l_p.map(|l| {
        let gap =
            (w_hat - fit.per_trajectory_covariance(k).expect("index checked")).frobenius_norm();
        l * dnorm * (t / m_rest * gap + 2.0 * l_e * l_phi * dnorm + r_w_frobenius)
    });

    Ok(DecompositionDiagnostics {
        k,
        delta_j,
        linear_term: dot(&art.corrected_gradient(), &delta_theta),
        direct_trace: plug_in_cost(&art.p0, &direct)?,
        r_ric,
        r_w,
        r_cross,
        r_w_frobenius,
        bound_w,
        bound_r_w: p0_norm * bound_w,
        bound_ric,
        bound_cross,
        delta_theta_norm: dnorm,
        delta_theta,
    })
}

/// `‖ζ − h‖ ‖IFᵐ_k − δθ_k‖ + |𝓡^Ric| + |𝓡^W| + |𝓡^×|`, an upper bound on
/// `|IF^stoch_k − ΔĴ_k|`.
pub fn modular_error_bound(
    fit: &ModelFit,
    art: &RiccatiArtifacts,
    k: usize,
    delta_theta: &[f64],
    diag: &DecompositionDiagnostics,
) -> Result<f64> {
    if delta_theta.len() != fit.n_params() {
        return Err(Error::DimensionMismatch("δθ must have p entries".into()));
    }
    let if_m = model_influence(fit, k)?;
    let gap: Vec<f64> = if_m.iter().zip(delta_theta).map(|(a, b)| a - b).collect();
    Ok(norm2(&art.corrected_gradient()) * norm2(&gap)
        + diag.r_ric.abs()
        + diag.r_w.abs()
        + diag.r_cross.abs())
}

/// One row of a score table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub k: usize,
    pub t_k: usize,
    pub if_fixed: f64,
    pub if_stoch: f64,
    pub delta_j_exact: Option<f64>,
    pub direct_trace: f64,
    pub r_ric: Option<f64>,
    pub r_w: Option<f64>,
    pub r_cross: Option<f64>,
    /// Set when the leave-one-out refit had no stabilizing DARE solution.
    pub excluded: bool,
}

/// Scores for every trajectory of one dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub score_time: Duration,
    pub refit_time: Option<Duration>,
}

pub const SCORE_CSV_HEADER: [&str; 10] = [
    "k",
    "T_k",
    "if_fixed",
    "if_stoch",
    "delta_j_exact",
    "direct_trace",
    "r_ric",
    "r_w",
    "r_cross",
    "excluded_flag",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ScoreTable {
    pub fn from_scores(fit: &ModelFit, scores: &[Scores]) -> Self {
        let rows = scores
            .iter()
            .enumerate()
            .map(|(k, s)| ScoreRow {
                k,
                t_k: fit.lengths()[k],
                if_fixed: s.if_fixed,
                if_stoch: s.if_stoch,
                delta_j_exact: None,
                direct_trace: s.direct_trace,
                r_ric: None,
                r_w: None,
                r_cross: None,
                excluded: false,
            })
            .collect();
        Self {
            rows,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SCORE_CSV_HEADER).expect("in-memory write");
        for row in &self.rows {
            w.write_record([
                row.k.to_string(),
                row.t_k.to_string(),
                row.if_fixed.to_string(),
                row.if_stoch.to_string(),
                opt(row.delta_j_exact),
                row.direct_trace.to_string(),
                opt(row.r_ric),
                opt(row.r_w),
                opt(row.r_cross),
                u8::from(row.excluded).to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv emits UTF-8")
    }
}
