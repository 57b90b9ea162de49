use std::collections::BTreeMap;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::{mean_sd, residuals, MetricSample};
use crate::baselines::{aggregate, Method};
use crate::bcla::Hyperparameters;
use crate::data::{AnnotationTable, FeatureTable};
use crate::error::{Error, Result};
use crate::gevd::{precision_upper_bound, CapSource};
use crate::rng::task_rng;

const MAX_REDRAWS: usize = 100;
const MIN_SWEEP_SIZE: usize = 3;

/// One method's RMSE on one annotator subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: Method,
    pub size: usize,
    pub rep: usize,
    pub rmse: f64,
}

/// Mean and spread of a method's RMSE per subset size.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub method: Method,
    pub annotator_counts: Vec<usize>,
    pub mean_rmse: Vec<f64>,
    pub sd_rmse: Vec<f64>,
    pub n_repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ordered by size, then repetition, then method.
    pub points: Vec<SweepPoint>,
    pub curves: Vec<SweepCurve>,
}

impl SweepResult {
    pub fn curve(&self, method: Method) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.method == method)
    }
}

/// Accuracy as a function of the number of annotators.
///
/// For each size, `n_reps` annotator subsets are drawn without replacement
/// and every method is re-run from scratch on the restricted table. Records
/// that lose all their annotations are dropped for that draw. Task
/// `(size, rep)` draws from its own stream of `seed`.
///
/// When `hp.cap` was derived from the prior (not fixed by the caller) it is
/// re-derived for each subset size, so the block size tracks the pool.
#[allow(clippy::too_many_arguments)]
pub fn annotator_sweep(
    data: &AnnotationTable,
    feats: &FeatureTable,
    reference: &[Option<f64>],
    hp: &Hyperparameters,
    methods: &[Method],
    sizes: &[usize],
    n_reps: usize,
    seed: u64,
) -> Result<SweepResult> {
    let r = data.n_annotators();
    if r < MIN_SWEEP_SIZE {
        return Err(Error::InvalidParameter(format!(
            "sweep needs at least {MIN_SWEEP_SIZE} annotators, got {r}"
        )));
    }
    if sizes.is_empty()
        || sizes.windows(2).any(|w| w[0] >= w[1])
        || sizes[0] < MIN_SWEEP_SIZE
        || sizes[sizes.len() - 1] > r
    {
        return Err(Error::InvalidParameter(format!(
            "sweep sizes must be strictly increasing within {MIN_SWEEP_SIZE}..={r}"
        )));
    }
    if n_reps == 0 || methods.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs methods and repetitions".into(),
        ));
    }
    if reference.len() != data.n_records() {
        return Err(Error::NoReference("the annotator sweep".into()));
    }

    let mut per_size_hp = BTreeMap::new();
    for &size in sizes {
        let mut h = hp.clone();
        if hp.cap.source != CapSource::Fixed {
            h.cap = precision_upper_bound(hp.k_lambda, hp.vartheta_lambda, size, seed)?;
        }
        per_size_hp.insert(size, h);
    }

    let tasks: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..n_reps).map(move |rep| (s, rep)))
        .collect();
    let results = tasks
        .par_iter()
        .enumerate()
        .map(|(t, &(size, rep))| {
            run_task(
                data,
                feats,
                reference,
                &per_size_hp[&size],
                methods,
                size,
                rep,
                seed,
                t,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<SweepPoint> = results.into_iter().flatten().collect();

    let curves = methods
        .iter()
        .map(|&method| {
            let (mean_rmse, sd_rmse) = sizes
                .iter()
                .map(|&size| {
                    mean_sd(
                        points
                            .iter()
                            .filter(move |p| p.method == method && p.size == size)
                            .map(|p| p.rmse),
                    )
                })
                .unzip();
            SweepCurve {
                method,
                annotator_counts: sizes.to_vec(),
                mean_rmse,
                sd_rmse,
                n_repetitions: n_reps,
            }
        })
        .collect();
    Ok(SweepResult { points, curves })
}

#[allow(clippy::too_many_arguments)]
fn run_task(
    data: &AnnotationTable,
    feats: &FeatureTable,
    reference: &[Option<f64>],
    hp: &Hyperparameters,
    methods: &[Method],
    size: usize,
    rep: usize,
    seed: u64,
    task: usize,
) -> Result<Vec<SweepPoint>> {
    let mut rng = task_rng(seed, task as u64);
    for _ in 0..MAX_REDRAWS {
        let mut chosen = sample(&mut rng, data.n_annotators(), size).into_vec();
        chosen.sort_unstable();
        let subset = data.select_annotators(&chosen)?;
        let sub_ref: Vec<Option<f64>> = subset.records.iter().map(|&i| reference[i]).collect();
        if sub_ref.iter().all(Option::is_none) {
            continue;
        }
        let sub_feats = feats.select_rows(&subset.records);
        return methods
            .iter()
            .map(|&method| {
                let est = aggregate(method, &subset.table, &sub_feats, hp, Some(&sub_ref))?;
                let m = MetricSample::from_residuals(&residuals(&est.z_hat, &sub_ref)?)?;
                Ok(SweepPoint {
                    method,
                    size,
                    rep,
                    rmse: m.rmse,
                })
            })
            .collect();
    }
    Err(Error::SweepExhausted(format!(
        "no subset of {size} annotators covered a referenced record after {MAX_REDRAWS} draws"
    )))
}
