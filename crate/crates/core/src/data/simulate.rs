use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use super::{AnnotationTable, FeatureTable};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Settings of the synthetic annotator study. Defaults reproduce the
/// 548-record, 20-annotator, fully observed set-up.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub n_records: usize,
    pub n_annotators: usize,
    /// Gamma shape of the annotator precision prior.
    pub k_lambda: f64,
    /// Gamma scale of the annotator precision prior (ms^-2).
    pub vartheta_lambda: f64,
    pub bias_mean: f64,
    pub bias_sd: f64,
    pub truth_mean: f64,
    pub truth_sd: f64,
    /// Probability that any given (record, annotator) cell is observed.
    pub density: f64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            n_records: 548,
            n_annotators: 20,
            k_lambda: 4.0,
            vartheta_lambda: 0.0003,
            bias_mean: 10.0,
            bias_sd: 25.0,
            truth_mean: 400.0,
            truth_sd: 40.0,
            density: 1.0,
        }
    }
}

/// Ground truth behind a simulated table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub z_true: Vec<f64>,
    pub phi_true: Vec<f64>,
    pub sigma_true: Vec<f64>,
}

impl SimulationParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.n_records == 0 || self.n_annotators == 0 {
            return bad("record and annotator counts must be positive");
        }
        if !(self.k_lambda > 0.0 && self.vartheta_lambda > 0.0) {
            return bad("Gamma shape and scale must be positive");
        }
        if !(self.bias_sd >= 0.0 && self.truth_sd >= 0.0) {
            return bad("standard deviations must be non-negative");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        if ![self.bias_mean, self.truth_mean, self.bias_sd, self.truth_sd]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("distribution parameters must be finite");
        }
        Ok(())
    }
}

/// Draws annotator precisions, biases, true labels and noisy annotations.
///
/// Draw order is fixed (precisions, biases, truths, then cell noise
/// record-major, then the observation mask) so a seed fully determines the
/// output.
pub fn simulate(
    params: &SimulationParams,
    seed: u64,
) -> Result<(AnnotationTable, FeatureTable, SimulationTruth)> {
    params.validate()?;
    let (n, r) = (params.n_records, params.n_annotators);
    let mut rng = seeded(seed);

    let gamma = Gamma::new(params.k_lambda, params.vartheta_lambda)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let bias = Normal::new(params.bias_mean, params.bias_sd)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let truth = Normal::new(params.truth_mean, params.truth_sd)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let lambda: Vec<f64> = (0..r).map(|_| gamma.sample(&mut rng)).collect();
    let phi_true: Vec<f64> = (0..r).map(|_| bias.sample(&mut rng)).collect();
    let z_true: Vec<f64> = (0..n).map(|_| truth.sample(&mut rng)).collect();
    let sigma_true: Vec<f64> = lambda.iter().map(|l| 1.0 / l.sqrt()).collect();

    let mut values = Vec::with_capacity(n * r);
    for &z in &z_true {
        for j in 0..r {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            values.push(z + phi_true[j] + noise * sigma_true[j]);
        }
    }

    let mut mask = vec![true; n * r];
    if params.density < 1.0 {
        for cell in mask.iter_mut() {
            *cell = rng.random::<f64>() < params.density;
        }
        for i in 0..n {
            if !mask[i * r..(i + 1) * r].iter().any(|&m| m) {
                mask[i * r + rng.random_range(0..r)] = true;
            }
        }
        for j in 0..r {
            if !(0..n).any(|i| mask[i * r + j]) {
                mask[rng.random_range(0..n) * r + j] = true;
            }
        }
    }

    let table = AnnotationTable::from_dense(
        (1..=n).map(|i| format!("rec{i:04}")).collect(),
        (1..=r).map(|j| format!("ann{j:02}")).collect(),
        values,
        mask,
    )?;
    Ok((
        table,
        FeatureTable::intercept_only(n),
        SimulationTruth {
            z_true,
            phi_true,
            sigma_true,
        },
    ))
}
