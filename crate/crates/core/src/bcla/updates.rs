//! Closed-form block updates. Each returns the new value of one parameter
//! block given the current state; none mutate the state.

use super::{Hyperparameters, LeastSquares, ModelState};
use crate::data::{AnnotationTable, FeatureTable};
use crate::error::Result;

/// E-step: precision-weighted combination of the bias-corrected labels and
/// the regression prediction.
///
/// `z_i = [sum_j (y_ij - phi_j) lambda_j + (x_i^T w) b] / [sum_j lambda_j + b]`
pub fn update_z(state: &ModelState, data: &AnnotationTable, feats: &FeatureTable) -> Vec<f64> {
    (0..data.n_records())
        .map(|i| {
            let prior_mean = feats.predict(i, &state.w);
            let (num, den) = data.by_record(i).iter().fold(
                (prior_mean * state.b, state.b),
                |(num, den), &(j, y)| {
                    let l = state.lambda[j];
                    (num + (y - state.phi[j]) * l, den + l)
                },
            );
            num / den
        })
        .collect()
}

/// Least-squares regression of `z` on the design matrix.
pub fn update_w(state: &ModelState, feats: &FeatureTable) -> Result<Vec<f64>> {
    Ok(LeastSquares::new(feats)?.solve(&state.z))
}

/// Per-annotator bias with the Gaussian prior acting as `alpha_phi /
/// lambda_j` pseudo-observations at `mu_phi`.
pub fn update_phi(state: &ModelState, data: &AnnotationTable, hp: &Hyperparameters) -> Vec<f64> {
    if !hp.estimate_bias {
        return vec![0.0; data.n_annotators()];
    }
    (0..data.n_annotators())
        .map(|j| {
            let obs = data.by_annotator(j);
            let resid: f64 = obs.iter().map(|&(i, y)| y - state.z[i]).sum();
            let ratio = state.alpha_phi / state.lambda[j];
            (resid + hp.mu_phi * ratio) / (obs.len() as f64 + ratio)
        })
        .collect()
}

/// `1/alpha_phi = [sum_j (phi_j - mu_phi)^2 + 2/vartheta_alpha] / (R + 2(k_alpha - 1))`
pub fn update_alpha_phi(state: &ModelState, hp: &Hyperparameters) -> f64 {
    if !hp.estimate_bias {
        return state.alpha_phi;
    }
    let prior = hp.alpha_prior();
    let ss: f64 = state.phi.iter().map(|p| (p - hp.mu_phi).powi(2)).sum();
    let dof = state.phi.len() as f64 + 2.0 * (prior.shape - 1.0);
    dof / (ss + prior.rate2())
}

/// `1/b = [sum_i (z_i - x_i^T w)^2 + 2/vartheta_b] / (N + 2(k_b - 1))`
pub fn update_b(state: &ModelState, feats: &FeatureTable, hp: &Hyperparameters) -> f64 {
    let prior = hp.b_prior();
    let ss: f64 = state
        .z
        .iter()
        .enumerate()
        .map(|(i, z)| (z - feats.predict(i, &state.w)).powi(2))
        .sum();
    let dof = state.z.len() as f64 + 2.0 * (prior.shape - 1.0);
    dof / (ss + prior.rate2())
}

/// New precisions after the cap, and how many were clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaUpdate {
    pub lambda: Vec<f64>,
    pub clamp_events: usize,
}

/// `1/lambda_j = [sum_i (y_ij - phi_j - z_i)^2 + 2/vartheta_lambda] / (N_j + 2(k_lambda - 1))`,
/// then `lambda_j <- min(lambda_j, lambda_max)`.
pub fn update_lambda(
    state: &ModelState,
    data: &AnnotationTable,
    hp: &Hyperparameters,
) -> LambdaUpdate {
    let prior = hp.lambda_prior();
    let cap = hp.cap.lambda_max;
    let mut clamp_events = 0;
    let lambda = (0..data.n_annotators())
        .map(|j| {
            let obs = data.by_annotator(j);
            let ss: f64 = obs
                .iter()
                .map(|&(i, y)| (y - state.phi[j] - state.z[i]).powi(2))
                .sum();
            let dof = obs.len() as f64 + 2.0 * (prior.shape - 1.0);
            let raw = dof / (ss + prior.rate2());
            if raw > cap {
                clamp_events += 1;
                cap
            } else {
                raw
            }
        })
        .collect();
    LambdaUpdate {
        lambda,
        clamp_events,
    }
}
