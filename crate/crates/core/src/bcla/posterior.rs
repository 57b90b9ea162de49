use std::f64::consts::TAU;

use super::{Hyperparameters, ModelState};
use crate::data::{AnnotationTable, FeatureTable};

/// The six additive groups of the log posterior (up to the evidence).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosteriorTerms {
    /// Gaussian annotation likelihood over observed cells.
    pub likelihood: f64,
    /// Gaussian prior of the biases around `mu_phi`.
    pub bias_prior: f64,
    /// Gaussian prior of the truths around the regression.
    pub truth_prior: f64,
    /// Gamma prior, summed over every annotator precision.
    pub lambda_prior: f64,
    pub alpha_prior: f64,
    pub b_prior: f64,
}

impl LogPosteriorTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.bias_prior
            + self.truth_prior
            + self.lambda_prior
            + self.alpha_prior
            + self.b_prior
    }
}

fn gaussian(precision: f64, sq: f64) -> f64 {
    -0.5 * ((TAU / precision).ln() + sq * precision)
}

pub fn log_posterior_terms(
    state: &ModelState,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> LogPosteriorTerms {
    let likelihood = data
        .observations()
        .map(|(i, j, y)| gaussian(state.lambda[j], (y - state.phi[j] - state.z[i]).powi(2)))
        .sum();
    let truth_prior = state
        .z
        .iter()
        .enumerate()
        .map(|(i, z)| gaussian(state.b, (z - feats.predict(i, &state.w)).powi(2)))
        .sum();
    let lambda_prior = {
        let prior = hp.lambda_prior();
        state.lambda.iter().map(|&l| prior.ln_pdf(l)).sum()
    };
    let (bias_prior, alpha_prior) = if hp.estimate_bias {
        (
            state
                .phi
                .iter()
                .map(|p| gaussian(state.alpha_phi, (p - hp.mu_phi).powi(2)))
                .sum(),
            hp.alpha_prior().ln_pdf(state.alpha_phi),
        )
    } else {
        (0.0, 0.0)
    };
    LogPosteriorTerms {
        likelihood,
        bias_prior,
        truth_prior,
        lambda_prior,
        alpha_prior,
        b_prior: hp.b_prior().ln_pdf(state.b),
    }
}

/// Log posterior of `state`. Non-finite output means a state invariant was
/// broken upstream.
pub fn log_posterior(
    state: &ModelState,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> f64 {
    log_posterior_terms(state, data, feats, hp).total()
}
