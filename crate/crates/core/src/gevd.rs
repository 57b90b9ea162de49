//! Generalized extreme value fit to block maxima of precision draws, and the
//! precision cap derived from its upper quantile.
//!
//! The parameterization is
//! `F(x) = exp(-[1 + k (x - mu) / vartheta]^(-1/k))`, so `k > 0` is the
//! heavy-tailed (Frechet) branch. For `|k| < GUMBEL_EPS` the `k -> 0` limit
//! `exp(-exp(-(x - mu) / vartheta))` is used instead.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::{seeded, task_rng};

pub const GUMBEL_EPS: f64 = 1e-8;
/// Number of block maxima drawn when deriving a cap.
pub const DEFAULT_N_BLOCKS: usize = 10_000;
/// Quantile of the fitted distribution used as the cap.
pub const CAP_QUANTILE: f64 = 0.99;
const MIN_SAMPLES: usize = 100;
const RESTARTS: usize = 5;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevdParams {
    /// Shape.
    pub k: f64,
    /// Scale, > 0.
    pub vartheta: f64,
    /// Location.
    pub mu: f64,
}

impl GevdParams {
    pub fn new(k: f64, vartheta: f64, mu: f64) -> Result<Self> {
        if !(vartheta > 0.0 && vartheta.is_finite() && k.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "GEVD needs finite k, mu and vartheta > 0 (got k={k}, vartheta={vartheta}, mu={mu})"
            )));
        }
        Ok(Self { k, vartheta, mu })
    }

    fn is_gumbel(&self) -> bool {
        self.k.abs() < GUMBEL_EPS
    }

    /// Log density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let s = (x - self.mu) / self.vartheta;
        if self.is_gumbel() {
            return -self.vartheta.ln() - s - (-s).exp();
        }
        let t = 1.0 + self.k * s;
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lt = t.ln();
        -self.vartheta.ln() - (1.0 + 1.0 / self.k) * lt - (-lt / self.k).exp()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let s = (x - self.mu) / self.vartheta;
        if self.is_gumbel() {
            return (-(-s).exp()).exp();
        }
        let t = 1.0 + self.k * s;
        if t <= 0.0 {
            return if self.k > 0.0 { 0.0 } else { 1.0 };
        }
        (-(-t.ln() / self.k).exp()).exp()
    }

    /// Inverse CDF, see [`gevd_quantile`].
    pub fn quantile(&self, p: f64) -> f64 {
        let y = -p.ln();
        if self.is_gumbel() {
            self.mu - self.vartheta * y.ln()
        } else {
            self.mu + self.vartheta / self.k * ((-self.k * y.ln()).exp() - 1.0)
        }
    }

    /// Whether every sample lies strictly inside the support.
    pub fn supports(&self, xs: &[f64]) -> bool {
        self.is_gumbel()
            || xs
                .iter()
                .all(|&x| 1.0 + self.k * (x - self.mu) / self.vartheta > 0.0)
    }
}

/// Inverse CDF at probability `p` in (0, 1).
pub fn gevd_quantile(params: &GevdParams, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    Ok(params.quantile(p))
}

/// How a [`PrecisionCap`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapSource {
    /// Upper quantile of a fitted GEVD.
    Fitted,
    /// Every fit restart failed; empirical quantile of the maxima.
    EmpiricalFallback,
    /// Supplied directly by the caller.
    Fixed,
}

/// Upper bound on annotator precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionCap {
    pub lambda_max: f64,
    pub params: Option<GevdParams>,
    pub n_blocks: usize,
    pub block_size: usize,
    pub source: CapSource,
}

impl PrecisionCap {
    pub fn fixed(lambda_max: f64) -> Result<Self> {
        if !(lambda_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "precision cap must be positive, got {lambda_max}"
            )));
        }
        Ok(Self {
            lambda_max,
            params: None,
            n_blocks: 0,
            block_size: 0,
            source: CapSource::Fixed,
        })
    }

    /// A cap that never engages.
    pub fn unbounded() -> Self {
        Self {
            lambda_max: f64::INFINITY,
            params: None,
            n_blocks: 0,
            block_size: 0,
            source: CapSource::Fixed,
        }
    }
}

/// Draws `n_blocks` maxima, each over `block_size` Gamma(k, vartheta)
/// precision draws.
pub fn sample_block_maxima(
    k_lambda: f64,
    vartheta_lambda: f64,
    block_size: usize,
    n_blocks: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(k_lambda > 0.0 && vartheta_lambda > 0.0) {
        return Err(Error::InvalidParameter(
            "Gamma shape and scale must be positive".into(),
        ));
    }
    if block_size == 0 || n_blocks < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need block_size >= 1 and n_blocks >= {MIN_SAMPLES}"
        )));
    }
    let dist = Gamma::new(k_lambda, vartheta_lambda)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = seeded(seed);
    Ok((0..n_blocks)
        .map(|_| {
            (0..block_size)
                .map(|_| dist.sample(&mut rng))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// Probability-weighted-moment (L-moment) estimates, used to seed the MLE.
pub fn lmoment_estimate(xs: &[f64]) -> Result<GevdParams> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &x) in sorted.iter().enumerate() {
        let i = i as f64;
        b0 += x;
        b1 += x * i / (n - 1.0);
        b2 += x * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
    }
    let (b0, b1, b2) = (b0 / n, b1 / n, b2 / n);
    let l1 = b0;
    let l2 = 2.0 * b1 - b0;
    let l3 = 6.0 * b2 - 6.0 * b1 + b0;
    if !(l2 > 0.0) {
        return Err(Error::DegenerateSample("zero L-scale".into()));
    }
    let t3 = l3 / l2;
    let c = 2.0 / (3.0 + t3) - std::f64::consts::LN_2 / 3f64.ln();
    // Hosking's shape has the opposite sign convention.
    let kh = 7.8590 * c + 2.9554 * c * c;
    if kh.abs() < 1e-6 {
        let vartheta = l2 / std::f64::consts::LN_2;
        return GevdParams::new(0.0, vartheta, l1 - EULER_GAMMA * vartheta);
    }
    let g = gamma(1.0 + kh);
    let vartheta = l2 * kh / ((1.0 - 2f64.powf(-kh)) * g);
    let mu = l1 - vartheta * (1.0 - g) / kh;
    GevdParams::new(-kh, vartheta, mu)
}

/// Maximum-likelihood GEVD fit.
///
/// The sample is standardized first; the optimizer works on
/// `(mu, ln vartheta, k)` and is started from the L-moment estimate and from
/// [`RESTARTS`] jittered copies of it. The best converged start wins.
pub fn fit_gevd(maxima: &[f64]) -> Result<GevdParams> {
    if maxima.len() < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_SAMPLES} maxima, got {}",
            maxima.len()
        )));
    }
    if maxima.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::InvalidParameter(
            "maxima must be finite and positive".into(),
        ));
    }
    let n = maxima.len() as f64;
    let mean = maxima.iter().sum::<f64>() / n;
    let sd = (maxima.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > mean.abs() * 1e-12) {
        return Err(Error::DegenerateSample("all maxima are equal".into()));
    }
    let z: Vec<f64> = maxima.iter().map(|x| (x - mean) / sd).collect();

    let nll = |p: &[f64]| -> f64 {
        let params = GevdParams {
            mu: p[0],
            vartheta: p[1].exp(),
            k: p[2],
        };
        let ll: f64 = z.iter().map(|&x| params.ln_pdf(x)).sum();
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };

    let init = lmoment_estimate(&z).unwrap_or(GevdParams {
        k: 0.0,
        vartheta: 6f64.sqrt() / std::f64::consts::PI,
        mu: -EULER_GAMMA * 6f64.sqrt() / std::f64::consts::PI,
    });
    let base = [init.mu, init.vartheta.ln(), init.k.clamp(-0.9, 0.9)];
    let mut jitter = task_rng(0x6e76_6466, 0);
    let mut starts = vec![base];
    for _ in 0..RESTARTS {
        starts.push([
            base[0] + jitter.random_range(-0.3..0.3),
            base[1] + jitter.random_range(-0.3..0.3),
            (base[2] + jitter.random_range(-0.2..0.2)).clamp(-0.9, 0.9),
        ]);
    }

    let mut best: Option<(f64, [f64; 3])> = None;
    for start in starts {
        if !nll(&start).is_finite() {
            continue;
        }
        // Restarting the simplex from its own optimum guards against
        // premature collapse.
        let mut x = start;
        let mut fx = f64::INFINITY;
        for _ in 0..4 {
            let (xn, fxn) = nelder_mead(&nll, x, [0.1, 0.1, 0.05], 1e-12, 4000);
            let done = (fx - fxn).abs() <= 1e-10 * (1.0 + fxn.abs());
            x = xn;
            fx = fxn;
            if done {
                break;
            }
        }
        if fx.is_finite() && best.is_none_or(|(bf, _)| fx < bf) {
            best = Some((fx, x));
        }
    }

    let (_, x) =
        best.ok_or_else(|| Error::FitFailed("no start produced a finite likelihood".into()))?;
    let params = GevdParams::new(x[2], x[1].exp() * sd, mean + x[0] * sd)
        .map_err(|e| Error::FitFailed(e.to_string()))?;
    if !params.supports(maxima) {
        return Err(Error::FitFailed("fitted support excludes a sample".into()));
    }
    Ok(params)
}

/// Nelder-Mead simplex minimizer on three parameters.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: [f64; 3],
    step: [f64; 3],
    ftol: f64,
    max_iter: usize,
) -> ([f64; 3], f64) {
    const DIM: usize = 3;
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(DIM + 1);
    simplex.push((x0, f(&x0)));
    for d in 0..DIM {
        let mut x = x0;
        x[d] += step[d];
        simplex.push((x, f(&x)));
    }

    let along = |c: &[f64; 3], w: &[f64; 3], t: f64| -> [f64; 3] {
        [
            c[0] + t * (w[0] - c[0]),
            c[1] + t * (w[1] - c[1]),
            c[2] + t * (w[2] - c[2]),
        ]
    };

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[DIM].1);
        if hi.is_finite() && (hi - lo).abs() <= ftol * (lo.abs() + hi.abs() + 1e-300) {
            break;
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..DIM] {
            for d in 0..DIM {
                centroid[d] += x[d] / DIM as f64;
            }
        }
        let worst = simplex[DIM].0;
        let reflected = along(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            simplex[DIM] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[DIM - 1].1 {
            simplex[DIM] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[DIM].1 {
                along(&centroid, &worst, -0.5)
            } else {
                along(&centroid, &worst, 0.5)
            };
            let fc = f(&contracted);
            if fc < fr.min(simplex[DIM].1) {
                simplex[DIM] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let x = along(&best, &v.0, 0.5);
                    *v = (x, f(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn empirical_quantile(xs: &[f64], p: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cap on annotator precision: the 0.99 quantile of a GEVD fitted to
/// [`DEFAULT_N_BLOCKS`] maxima of `block_size` prior draws.
pub fn precision_upper_bound(
    k_lambda: f64,
    vartheta_lambda: f64,
    block_size: usize,
    seed: u64,
) -> Result<PrecisionCap> {
    precision_upper_bound_with(
        k_lambda,
        vartheta_lambda,
        block_size,
        DEFAULT_N_BLOCKS,
        seed,
    )
}

pub fn precision_upper_bound_with(
    k_lambda: f64,
    vartheta_lambda: f64,
    block_size: usize,
    n_blocks: usize,
    seed: u64,
) -> Result<PrecisionCap> {
    let maxima = sample_block_maxima(k_lambda, vartheta_lambda, block_size, n_blocks, seed)?;
    let (lambda_max, params, source) = match fit_gevd(&maxima) {
        Ok(params) => (
            params.quantile(CAP_QUANTILE),
            Some(params),
            CapSource::Fitted,
        ),
        Err(Error::FitFailed(msg)) => {
            log::warn!("GEVD fit failed ({msg}); using the empirical quantile of the maxima");
            (
                empirical_quantile(&maxima, CAP_QUANTILE),
                None,
                CapSource::EmpiricalFallback,
            )
        }
        Err(e) => return Err(e),
    };
    Ok(PrecisionCap {
        lambda_max,
        params,
        n_blocks,
        block_size,
        source,
    })
}
