use rand::Rng as _;
use rayon::prelude::*;

use super::{mean_sd, residuals, wilcoxon_rank_sum, MetricSample, RankSumTest};
use crate::baselines::{aggregate, Method};
use crate::bcla::Hyperparameters;
use crate::data::{AnnotationTable, FeatureTable};
use crate::error::{Error, Result};
use crate::rng::task_rng;

/// Bootstrap distribution of RMSE and MAE for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    pub method: String,
    pub samples: Vec<MetricSample>,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
    pub mean_mae: f64,
    pub sd_mae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    Mae,
}

impl BootstrapReport {
    pub fn from_samples(method: impl Into<String>, samples: Vec<MetricSample>) -> Self {
        let (mean_rmse, sd_rmse) = mean_sd(samples.iter().map(|s| s.rmse));
        let (mean_mae, sd_mae) = mean_sd(samples.iter().map(|s| s.mae));
        Self {
            method: method.into(),
            samples,
            mean_rmse,
            sd_rmse,
            mean_mae,
            sd_mae,
        }
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match metric {
                Metric::Rmse => s.rmse,
                Metric::Mae => s.mae,
            })
            .collect()
    }
}

fn check_n_boot(n_boot: usize) -> Result<()> {
    if n_boot < 2 {
        return Err(Error::InvalidParameter("n_boot must be at least 2".into()));
    }
    Ok(())
}

/// Resamples the per-record residuals of one estimate with replacement.
/// Replicate `b` draws from its own stream of `seed`.
pub fn bootstrap_metrics(
    method: impl Into<String>,
    estimates: &[Option<f64>],
    reference: &[Option<f64>],
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    check_n_boot(n_boot)?;
    let res = residuals(estimates, reference)?;
    let n = res.len();
    let samples = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = task_rng(seed, b as u64);
            let draw: Vec<f64> = (0..n).map(|_| res[rng.random_range(0..n)]).collect();
            MetricSample::from_residuals(&draw)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapReport::from_samples(method, samples))
}

/// Resamples records with replacement and re-runs the method on each
/// replicate table. Much more expensive than [`bootstrap_metrics`].
pub fn bootstrap_refit(
    method: Method,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
    reference: &[Option<f64>],
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    check_n_boot(n_boot)?;
    let n = data.n_records();
    let samples = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = task_rng(seed, b as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let subset = data.select_records(&rows)?;
            let sub_feats = feats.select_rows(&rows);
            let sub_ref: Vec<Option<f64>> = rows.iter().map(|&i| reference[i]).collect();
            let est = aggregate(method, &subset.table, &sub_feats, hp, Some(&sub_ref))?;
            MetricSample::from_residuals(&residuals(&est.z_hat, &sub_ref)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapReport::from_samples(method.name(), samples))
}

/// Two-sided rank-sum test between every pair of reports on one metric.
/// Entry `[a][b]` compares report `a` with report `b`; the diagonal
/// compares a report with itself.
pub fn pairwise_tests(
    reports: &[BootstrapReport],
    metric: Metric,
) -> Result<Vec<Vec<RankSumTest>>> {
    let values: Vec<Vec<f64>> = reports.iter().map(|r| r.values(metric)).collect();
    values
        .iter()
        .map(|a| values.iter().map(|b| wilcoxon_rank_sum(a, b)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::present;

    #[test]
    fn zero_residuals_give_zero_spread() {
        let r = present(&[1.0, 2.0, 3.0]);
        let rep = bootstrap_metrics("x", &r, &r, 20, 1).unwrap();
        assert!(rep.samples.iter().all(|s| s.rmse == 0.0));
        assert_eq!((rep.mean_rmse, rep.sd_rmse), (0.0, 0.0));
        assert_eq!(rep.samples.len(), 20);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let e = present(
            &(0..200)
                .map(|i| (i as f64 * 0.37).sin() * 10.0)
                .collect::<Vec<_>>(),
        );
        let r = present(&[0.0; 200]);
        let a = bootstrap_metrics("x", &e, &r, 50, 7).unwrap();
        assert_eq!(a, bootstrap_metrics("x", &e, &r, 50, 7).unwrap());
        let b = bootstrap_metrics("x", &e, &r, 50, 8).unwrap();
        assert_ne!(a.samples, b.samples);
        let joint = (a.sd_rmse.powi(2) + b.sd_rmse.powi(2)).sqrt();
        assert!((a.mean_rmse - b.mean_rmse).abs() < 3.0 * joint);
    }

    #[test]
    fn summary_recomputable_from_samples() {
        let e = present(&[1.0, -2.0, 4.0, 0.5, 3.0]);
        let r = present(&[0.0; 5]);
        let rep = bootstrap_metrics("x", &e, &r, 30, 3).unwrap();
        let again = BootstrapReport::from_samples("x", rep.samples.clone());
        assert_eq!(rep, again);
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = present(&[1.0]);
        assert!(bootstrap_metrics("x", &r, &r, 1, 0).is_err());
        assert!(matches!(
            bootstrap_metrics("x", &[None], &r, 10, 0),
            Err(Error::EmptyOverlap)
        ));
    }

    #[test]
    fn pairwise_matrix_is_symmetric() {
        let r = present(&[0.0; 40]);
        let reports: Vec<BootstrapReport> = [1.0, 2.0, 2.5]
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let e = present(
                    &(0..40)
                        .map(|i| s * ((i * 7 % 11) as f64 - 5.0))
                        .collect::<Vec<_>>(),
                );
                bootstrap_metrics(format!("m{k}"), &e, &r, 25, k as u64).unwrap()
            })
            .collect();
        let m = pairwise_tests(&reports, Metric::Rmse).unwrap();
        for (a, row) in m.iter().enumerate() {
            assert_eq!(row[a].p_value, 1.0);
            for (b, t) in row.iter().enumerate() {
                assert_eq!(t.p_value, m[b][a].p_value);
            }
        }
    }
}
