use super::{
    log_posterior, update_alpha_phi, update_b, update_lambda, update_phi, update_z,
    Hyperparameters, LeastSquares, ModelState,
};
use crate::data::{AnnotationTable, FeatureTable};
use crate::error::{Error, Result};

/// Smallest mean squared residual used when a flat prior leaves no prior
/// mean to start a precision from (ms^2).
const MIN_INIT_VARIANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmTrace {
    /// Log posterior of the initial state, before the first sweep.
    pub initial_log_posterior: f64,
    /// Log posterior after each sweep.
    pub log_posterior: Vec<f64>,
    pub max_rel_change: Vec<f64>,
    /// Precisions clamped during each sweep.
    pub clamp_events: Vec<usize>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl EmTrace {
    pub fn total_clamp_events(&self) -> usize {
        self.clamp_events.iter().sum()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn check_inputs(data: &AnnotationTable, feats: &FeatureTable, hp: &Hyperparameters) -> Result<()> {
    hp.validate()?;
    if feats.n_records() != data.n_records() {
        return Err(Error::InvalidParameter(format!(
            "feature table has {} rows for {} records",
            feats.n_records(),
            data.n_records()
        )));
    }
    Ok(())
}

/// Starting point: per-record medians, mean residual biases, prior-mean
/// precisions (capped) and least-squares weights.
pub fn initialize(
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> Result<ModelState> {
    check_inputs(data, feats, hp)?;
    initialize_with(data, hp, &LeastSquares::new(feats)?)
}

fn initialize_with(
    data: &AnnotationTable,
    hp: &Hyperparameters,
    solver: &LeastSquares,
) -> Result<ModelState> {
    let z: Vec<f64> = (0..data.n_records())
        .map(|i| {
            let mut ys: Vec<f64> = data.by_record(i).iter().map(|&(_, y)| y).collect();
            median(&mut ys)
        })
        .collect();

    let phi: Vec<f64> = (0..data.n_annotators())
        .map(|j| {
            if !hp.estimate_bias {
                return 0.0;
            }
            let obs = data.by_annotator(j);
            obs.iter().map(|&(i, y)| y - z[i]).sum::<f64>() / obs.len() as f64
        })
        .collect();

    let cap = hp.cap.lambda_max;
    let lambda = (0..data.n_annotators())
        .map(|j| {
            let start = hp.lambda_prior().mean().unwrap_or_else(|| {
                let obs = data.by_annotator(j);
                let msr = obs
                    .iter()
                    .map(|&(i, y)| (y - phi[j] - z[i]).powi(2))
                    .sum::<f64>()
                    / obs.len() as f64;
                1.0 / msr.max(MIN_INIT_VARIANCE)
            });
            start.min(cap)
        })
        .collect();

    let alpha_phi = hp.alpha_prior().mean().unwrap_or(1.0);
    let w = solver.solve(&z);
    let b = hp.b_prior().mean().unwrap_or_else(|| {
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        1.0 / var.max(MIN_INIT_VARIANCE)
    });

    Ok(ModelState {
        z,
        w,
        phi,
        lambda,
        alpha_phi,
        b,
    })
}

/// Runs E-step / M-step sweeps until the largest relative parameter change
/// drops below `hp.convergence_tol` or `hp.max_iterations` is reached.
///
/// M-step order is w, phi, alpha_phi, b, lambda; each block sees the values
/// already updated in the same sweep. Hitting the iteration limit is not an
/// error; check `trace.converged`.
pub fn run_em(
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> Result<(ModelState, EmTrace)> {
    check_inputs(data, feats, hp)?;
    let solver = LeastSquares::new(feats)?;
    let state = initialize_with(data, hp, &solver)?;
    iterate(data, feats, hp, &solver, state)
}

/// Same as [`run_em`] but starting from a caller-supplied state.
pub fn run_em_from(
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
    initial: ModelState,
) -> Result<(ModelState, EmTrace)> {
    check_inputs(data, feats, hp)?;
    initial.check_shape(data, feats.width())?;
    let solver = LeastSquares::new(feats)?;
    iterate(data, feats, hp, &solver, initial)
}

fn iterate(
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
    solver: &LeastSquares,
    mut state: ModelState,
) -> Result<(ModelState, EmTrace)> {
    let mut trace = EmTrace {
        initial_log_posterior: log_posterior(&state, data, feats, hp),
        ..Default::default()
    };

    for _ in 0..hp.max_iterations {
        let previous = state.clone();

        state.z = update_z(&state, data, feats);
        state.w = solver.solve(&state.z);
        state.phi = update_phi(&state, data, hp);
        state.alpha_phi = update_alpha_phi(&state, hp);
        state.b = update_b(&state, feats, hp);
        let lambda = update_lambda(&state, data, hp);
        state.lambda = lambda.lambda;

        let lp = log_posterior(&state, data, feats, hp);
        if !lp.is_finite() {
            return Err(Error::Numerical(format!(
                "log posterior became {lp} at iteration {}",
                trace.iterations_run + 1
            )));
        }
        let change = state.max_relative_change(&previous);
        trace.log_posterior.push(lp);
        trace.max_rel_change.push(change);
        trace.clamp_events.push(lambda.clamp_events);
        trace.iterations_run += 1;

        if change < hp.convergence_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((state, trace))
}
