use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::sysid::{
    loto_refit, model_influence, prediction_loss, prediction_loss_gradient, ModelFit,
    TrajectoryDataset,
};

/// First-order and exact held-out prediction-loss shifts, one entry per
/// training trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutScores {
    pub if_pred: Vec<f64>,
    pub delta_l_exact: Vec<f64>,
}

/// Scores each training trajectory by its effect on the held-out one-step
/// loss: `∇L_pred(θ̂)ᵀ IFᵐ_k` against the refit difference
/// `L_pred(θ̂_∖k) − L_pred(θ̂)`.
pub fn heldout_prediction_scores(
    fit: &ModelFit,
    heldout: &TrajectoryDataset,
    data: &TrajectoryDataset,
    lambda: f64,
) -> Result<HeldoutScores> {
    if heldout.n_x() != fit.n_x() || heldout.n_u() != fit.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "held-out data is {}/{}, model is {}/{}",
            heldout.n_x(),
            heldout.n_u(),
            fit.n_x(),
            fit.n_u()
        )));
    }
    if data.num_trajectories() != fit.num_trajectories() {
        return Err(Error::DimensionMismatch(
            "training data does not match the fit".into(),
        ));
    }
    let grad = prediction_loss_gradient(heldout, fit.theta());
    let base = prediction_loss(heldout, fit.theta());
    let n = fit.num_trajectories();
    let mut if_pred = Vec::with_capacity(n);
    let mut delta_l_exact = Vec::with_capacity(n);
    for k in 0..n {
        if_pred.push(dot(&grad, &model_influence(fit, k)?));
        let refit = loto_refit(data, lambda, k)?;
        delta_l_exact.push(prediction_loss(heldout, &refit.theta) - base);
    }
    Ok(HeldoutScores {
        if_pred,
        delta_l_exact,
    })
}
