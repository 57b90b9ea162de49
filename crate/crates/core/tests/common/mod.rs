//! Shared instance generators and independent oracles for the integration
//! tests. Nothing here calls the library's objective or test statistics.
#![allow(dead_code)]

use bcla::bcla::{Hyperparameters, ModelState};
use bcla::data::{AnnotationTable, FeatureTable};
use bcla::gevd::PrecisionCap;
use bcla::rng::Rng;
use itertools::Itertools;
use rand::Rng as _;

/// Random sparse toy table with every record and annotator observed at
/// least once, plus either an intercept-only design or one random feature.
pub fn random_instance(
    rng: &mut Rng,
    max_records: usize,
    max_annotators: usize,
) -> (AnnotationTable, FeatureTable) {
    let n = rng.random_range(3..=max_records);
    let r = rng.random_range(2..=max_annotators);
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(340.0..460.0)).collect();
    let phi: Vec<f64> = (0..r).map(|_| rng.random_range(-25.0..35.0)).collect();
    let sd: Vec<f64> = (0..r).map(|_| rng.random_range(4.0..30.0)).collect();

    let mut mask = vec![vec![false; r]; n];
    for row in mask.iter_mut() {
        for cell in row.iter_mut() {
            *cell = rng.random_bool(0.75);
        }
    }
    for (i, row) in mask.iter_mut().enumerate() {
        if !row.iter().any(|&m| m) {
            row[i % r] = true;
        }
    }
    for j in 0..r {
        if !mask.iter().any(|row| row[j]) {
            mask[j % n][j] = true;
        }
    }
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            (0..r)
                .map(|j| {
                    mask[i][j].then(|| {
                        let u: f64 = rng.random_range(-1.0..1.0);
                        z[i] + phi[j] + 1.7 * sd[j] * u
                    })
                })
                .collect()
        })
        .collect();
    let data = AnnotationTable::from_options(&rows).unwrap();
    let feats = if rng.random_bool(0.5) {
        FeatureTable::intercept_only(n)
    } else {
        let rows = (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        FeatureTable::new(vec!["f1".into()], rows, true).unwrap()
    };
    (data, feats)
}

/// Proper priors with randomised constants and an inactive cap.
pub fn random_hyperparameters(rng: &mut Rng) -> Hyperparameters {
    Hyperparameters {
        k_b: rng.random_range(1.5..5.0),
        vartheta_b: rng.random_range(1e-4..1e-2),
        mu_phi: rng.random_range(-10.0..20.0),
        k_alpha: rng.random_range(1.5..5.0),
        vartheta_alpha: rng.random_range(1e-4..1e-2),
        k_lambda: rng.random_range(1.5..6.0),
        vartheta_lambda: rng.random_range(1e-4..1e-2),
        estimate_bias: true,
        max_iterations: 5000,
        convergence_tol: 1e-9,
        cap: PrecisionCap::fixed(1e6).unwrap(),
    }
}

pub fn random_state(rng: &mut Rng, data: &AnnotationTable, feats: &FeatureTable) -> ModelState {
    let z = (0..data.n_records())
        .map(|i| {
            let obs = data.by_record(i);
            obs.iter().map(|o| o.1).sum::<f64>() / obs.len() as f64 + rng.random_range(-5.0..5.0)
        })
        .collect();
    ModelState {
        z,
        w: (0..feats.width())
            .map(|_| rng.random_range(-20.0..420.0))
            .collect(),
        phi: (0..data.n_annotators())
            .map(|_| rng.random_range(-20.0..30.0))
            .collect(),
        lambda: (0..data.n_annotators())
            .map(|_| rng.random_range(5e-4..2e-2))
            .collect(),
        alpha_phi: rng.random_range(1e-4..1e-2),
        b: rng.random_range(1e-4..1e-2),
    }
}

fn gamma_term(shape: f64, scale: f64, x: f64) -> f64 {
    if shape == 1.0 && scale.is_infinite() {
        0.0
    } else {
        (shape - 1.0) * x.ln() - x / scale
    }
}

/// Every additive term of the log posterior (up to constants), one entry
/// per observation, record, annotator and hyperprior.
pub fn contributions(
    s: &ModelState,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..data.n_records() {
        for j in 0..data.n_annotators() {
            if let Some(y) = data.get(i, j) {
                let e = y - s.z[i] - s.phi[j];
                out.push(0.5 * s.lambda[j].ln() - 0.5 * s.lambda[j] * e * e);
            }
        }
    }
    if hp.estimate_bias {
        for j in 0..data.n_annotators() {
            let d = s.phi[j] - hp.mu_phi;
            out.push(0.5 * s.alpha_phi.ln() - 0.5 * s.alpha_phi * d * d);
        }
        out.push(gamma_term(hp.k_alpha, hp.vartheta_alpha, s.alpha_phi));
    }
    for i in 0..data.n_records() {
        let m: f64 = feats.row(i).iter().zip(&s.w).map(|(x, w)| x * w).sum();
        let d = s.z[i] - m;
        out.push(0.5 * s.b.ln() - 0.5 * s.b * d * d);
    }
    for j in 0..data.n_annotators() {
        out.push(gamma_term(hp.k_lambda, hp.vartheta_lambda, s.lambda[j]));
    }
    out.push(gamma_term(hp.k_b, hp.vartheta_b, s.b));
    out
}

pub fn oracle_log_posterior(
    s: &ModelState,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> f64 {
    contributions(s, data, feats, hp).iter().sum()
}

#[derive(Debug, Clone, Copy)]
pub enum Param {
    W(usize),
    Phi(usize),
    Alpha,
    B,
    Lambda(usize),
}

fn slot(s: &mut ModelState, p: Param) -> &mut f64 {
    match p {
        Param::W(c) => &mut s.w[c],
        Param::Phi(j) => &mut s.phi[j],
        Param::Alpha => &mut s.alpha_phi,
        Param::B => &mut s.b,
        Param::Lambda(j) => &mut s.lambda[j],
    }
}

/// Central finite-difference partial of the log posterior in `p`, divided
/// by the sum of absolute partials of its individual terms. Zero at a
/// stationary point; 1 when every term pulls the same way.
pub fn relative_partial(
    s: &ModelState,
    p: Param,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> f64 {
    let mut hi = s.clone();
    let mut lo = s.clone();
    let x = *slot(&mut hi, p);
    let h = match p {
        Param::W(_) | Param::Phi(_) => 1e-5 * x.abs().max(1.0),
        _ => 1e-5 * x,
    };
    *slot(&mut hi, p) = x + h;
    *slot(&mut lo, p) = x - h;
    let a = contributions(&hi, data, feats, hp);
    let b = contributions(&lo, data, feats, hp);
    let parts: Vec<f64> = a.iter().zip(&b).map(|(u, v)| (u - v) / (2.0 * h)).collect();
    let total: f64 = parts.iter().sum();
    let scale: f64 = parts.iter().map(|d| d.abs()).sum();
    if scale == 0.0 {
        0.0
    } else {
        total.abs() / scale
    }
}

/// Doubled mid-rank of every value in `pooled`: `2 * #less + #equal + 1`.
fn doubled_midranks(pooled: &[f64]) -> Vec<i64> {
    pooled
        .iter()
        .map(|&x| {
            let less = pooled.iter().filter(|&&v| v < x).count() as i64;
            let equal = pooled.iter().filter(|&&v| v == x).count() as i64;
            2 * less + equal + 1
        })
        .collect()
}

/// Two-sided rank-sum p-value by enumerating every relabelling of the
/// pooled sample.
pub fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let n = pooled.len() as i64;
    let na = a.len();
    // Twice the rank sum, against twice its null mean na(n+1)/2.
    let centre = na as i64 * (n + 1);
    let observed = (ranks[..na].iter().sum::<i64>() - centre).abs();
    let mut extreme = 0u64;
    let mut total = 0u64;
    for combo in (0..pooled.len()).combinations(na) {
        let s: i64 = combo.iter().map(|&k| ranks[k]).sum();
        total += 1;
        if (s - centre).abs() >= observed {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}
