use crate::bcla::ModelState;
use crate::data::SimulationTruth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatorRecovery {
    pub phi_true: f64,
    pub phi_hat: f64,
    pub sigma_true: f64,
    pub sigma_hat: f64,
}

/// Estimated against simulated annotator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub annotators: Vec<AnnotatorRecovery>,
    /// `None` when either side has zero variance (e.g. biases pinned at 0).
    pub correlation_phi: Option<f64>,
    pub correlation_sigma: Option<f64>,
    /// Mean of `sigma_hat - sigma_true`; positive means over-estimation.
    pub mean_sigma_error: f64,
}

/// Pearson correlation, `None` for constant inputs.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn recovery_report(state: &ModelState, truth: &SimulationTruth) -> Result<RecoveryReport> {
    recovery_from_estimates(&state.phi, &state.sigma(), truth)
}

/// As [`recovery_report`], from per-annotator bias and sd estimates.
pub fn recovery_from_estimates(
    phi_hat: &[f64],
    sigma_hat: &[f64],
    truth: &SimulationTruth,
) -> Result<RecoveryReport> {
    let r = truth.phi_true.len();
    if phi_hat.len() != r || sigma_hat.len() != r || truth.sigma_true.len() != r || r == 0 {
        return Err(Error::InvalidParameter(
            "estimates and simulation truth disagree on the annotator count".into(),
        ));
    }
    let annotators: Vec<AnnotatorRecovery> = (0..r)
        .map(|j| AnnotatorRecovery {
            phi_true: truth.phi_true[j],
            phi_hat: phi_hat[j],
            sigma_true: truth.sigma_true[j],
            sigma_hat: sigma_hat[j],
        })
        .collect();
    let mean_sigma_error = annotators
        .iter()
        .map(|a| a.sigma_hat - a.sigma_true)
        .sum::<f64>()
        / r as f64;
    Ok(RecoveryReport {
        correlation_phi: pearson(phi_hat, &truth.phi_true),
        correlation_sigma: pearson(sigma_hat, &truth.sigma_true),
        annotators,
        mean_sigma_error,
    })
}
