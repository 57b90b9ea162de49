//! Accuracy metrics against reference labels, bootstrap distributions,
//! rank-sum tests, annotator-count sweeps and parameter recovery.

mod bootstrap;
mod recovery;
mod sweep;
mod wilcoxon;

pub use bootstrap::{bootstrap_metrics, bootstrap_refit, pairwise_tests, BootstrapReport, Metric};
pub use recovery::{
    pearson, recovery_from_estimates, recovery_report, AnnotatorRecovery, RecoveryReport,
};
pub use sweep::{annotator_sweep, SweepCurve, SweepPoint, SweepResult};
pub use wilcoxon::{wilcoxon_rank_sum, PValueMethod, RankSumTest, EXACT_MAX_N};

use crate::error::{Error, Result};

/// RMSE and MAE over one set of residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub rmse: f64,
    pub mae: f64,
    pub n_records_used: usize,
}

impl MetricSample {
    pub fn from_residuals(residuals: &[f64]) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::EmptyOverlap);
        }
        let n = residuals.len() as f64;
        let mse = residuals.iter().map(|e| e * e).sum::<f64>() / n;
        let mae = residuals.iter().map(|e| e.abs()).sum::<f64>() / n;
        Ok(Self {
            rmse: mse.sqrt(),
            mae,
            n_records_used: residuals.len(),
        })
    }
}

/// `estimate - reference` for every record where both are present.
pub fn residuals(estimates: &[Option<f64>], reference: &[Option<f64>]) -> Result<Vec<f64>> {
    if estimates.len() != reference.len() {
        return Err(Error::InvalidParameter(format!(
            "{} estimates for {} reference labels",
            estimates.len(),
            reference.len()
        )));
    }
    let out: Vec<f64> = estimates
        .iter()
        .zip(reference)
        .filter_map(|(e, r)| Some(e.as_ref()? - r.as_ref()?))
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    Ok(out)
}

pub fn rmse(estimates: &[Option<f64>], reference: &[Option<f64>]) -> Result<f64> {
    Ok(MetricSample::from_residuals(&residuals(estimates, reference)?)?.rmse)
}

pub fn mae(estimates: &[Option<f64>], reference: &[Option<f64>]) -> Result<f64> {
    Ok(MetricSample::from_residuals(&residuals(estimates, reference)?)?.mae)
}

/// Wraps a dense slice as all-present values.
pub fn present(values: &[f64]) -> Vec<Option<f64>> {
    values.iter().copied().map(Some).collect()
}

pub(crate) fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}
