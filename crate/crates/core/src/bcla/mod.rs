//! MAP-EM inference of per-record truths together with per-annotator bias
//! and precision.
//!
//! Generative model, for record `i` and annotator `j`:
//!
//! ```text
//! y_ij ~ N(z_i + phi_j, 1 / lambda_j)      lambda_j ~ Gamma(k_lambda, vartheta_lambda)
//! phi_j ~ N(mu_phi, 1 / alpha_phi)         alpha_phi ~ Gamma(k_alpha, vartheta_alpha)
//! z_i  ~ N(x_i^T w, 1 / b)                 b ~ Gamma(k_b, vartheta_b)
//! ```
//!
//! Every update is the closed-form maximizer of the log posterior in one
//! block of parameters with the others held fixed, so a full sweep is
//! coordinate ascent. Sums over annotations only visit observed cells.

mod em;
mod posterior;
mod regression;
mod updates;

pub use em::{initialize, run_em, run_em_from, EmTrace};
pub use posterior::{log_posterior, log_posterior_terms, LogPosteriorTerms};
pub use regression::LeastSquares;
pub use updates::{
    update_alpha_phi, update_b, update_lambda, update_phi, update_w, update_z, LambdaUpdate,
};

use statrs::function::gamma::ln_gamma;

use crate::data::AnnotationTable;
use crate::error::{Error, Result};
use crate::gevd::{precision_upper_bound, PrecisionCap};

/// Prior constants and EM controls.
///
/// A Gamma prior with `k = 1` and infinite scale is treated as flat
/// (improper uniform): it contributes nothing to the objective and reduces
/// the corresponding update to maximum likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub k_b: f64,
    pub vartheta_b: f64,
    /// Mean of the bias distribution (ms).
    pub mu_phi: f64,
    pub k_alpha: f64,
    pub vartheta_alpha: f64,
    pub k_lambda: f64,
    pub vartheta_lambda: f64,
    /// When false, every `phi_j` is pinned to zero and `alpha_phi` is not
    /// part of the model.
    pub estimate_bias: bool,
    pub max_iterations: usize,
    /// Threshold on `max |d theta| / (1 + |theta|)`.
    pub convergence_tol: f64,
    pub cap: PrecisionCap,
}

/// Built-in prior settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Synthetic study: best annotator assumed within +-15 ms.
    Sim,
    /// Real annotations: best annotator assumed within +-5 ms.
    Real,
}

impl Profile {
    pub fn vartheta_lambda(self) -> f64 {
        match self {
            Profile::Sim => 0.0003,
            Profile::Real => 0.003,
        }
    }

    /// Profile priors with a caller-supplied cap.
    pub fn hyperparameters(self, cap: PrecisionCap) -> Hyperparameters {
        Hyperparameters {
            k_b: 3.0,
            vartheta_b: 0.0002,
            mu_phi: 10.0,
            k_alpha: 3.0,
            vartheta_alpha: 0.0005,
            k_lambda: 4.0,
            vartheta_lambda: self.vartheta_lambda(),
            estimate_bias: true,
            max_iterations: 5_000,
            convergence_tol: 1e-6,
            cap,
        }
    }

    /// Profile priors with the cap derived for a pool of `n_annotators`.
    pub fn hyperparameters_for(self, n_annotators: usize, seed: u64) -> Result<Hyperparameters> {
        let cap = precision_upper_bound(4.0, self.vartheta_lambda(), n_annotators, seed)?;
        Ok(self.hyperparameters(cap))
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Profile::Sim),
            "real" => Ok(Profile::Real),
            other => Err(Error::InvalidParameter(format!(
                "unknown profile `{other}`"
            ))),
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let gammas = [
            ("b", self.k_b, self.vartheta_b),
            ("alpha_phi", self.k_alpha, self.vartheta_alpha),
            ("lambda", self.k_lambda, self.vartheta_lambda),
        ];
        for (name, k, s) in gammas {
            if !(k > 0.0 && k.is_finite() && s > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "Gamma prior on {name} needs positive shape and scale (got {k}, {s})"
                )));
            }
        }
        if !self.mu_phi.is_finite() {
            return Err(Error::InvalidParameter("mu_phi must be finite".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be >= 1".into(),
            ));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "convergence_tol must be > 0".into(),
            ));
        }
        if !(self.cap.lambda_max > 0.0) {
            return Err(Error::InvalidParameter("precision cap must be > 0".into()));
        }
        Ok(())
    }

    /// Bias-free, flat-prior reduction used by the EM-R baseline.
    pub fn em_r(&self) -> Self {
        Self {
            k_b: 1.0,
            vartheta_b: f64::INFINITY,
            k_lambda: 1.0,
            vartheta_lambda: f64::INFINITY,
            mu_phi: 0.0,
            estimate_bias: false,
            ..self.clone()
        }
    }

    pub(crate) fn lambda_prior(&self) -> GammaPrior {
        GammaPrior::new(self.k_lambda, self.vartheta_lambda)
    }

    pub(crate) fn alpha_prior(&self) -> GammaPrior {
        GammaPrior::new(self.k_alpha, self.vartheta_alpha)
    }

    pub(crate) fn b_prior(&self) -> GammaPrior {
        GammaPrior::new(self.k_b, self.vartheta_b)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPrior {
    fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn is_flat(&self) -> bool {
        self.shape == 1.0 && self.scale.is_infinite()
    }

    /// Finite prior mean `k * vartheta`, if any.
    pub fn mean(&self) -> Option<f64> {
        let m = self.shape * self.scale;
        m.is_finite().then_some(m)
    }

    /// `2 / vartheta`, zero for an infinite scale.
    pub fn rate2(&self) -> f64 {
        2.0 / self.scale
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        (self.shape - 1.0) * x.ln()
            - ln_gamma(self.shape)
            - self.shape * self.scale.ln()
            - x / self.scale
    }
}

/// Full parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// Inferred truth per record (ms).
    pub z: Vec<f64>,
    /// Regression weights, one per design column.
    pub w: Vec<f64>,
    /// Bias per annotator (ms).
    pub phi: Vec<f64>,
    /// Precision per annotator (ms^-2).
    pub lambda: Vec<f64>,
    pub alpha_phi: f64,
    pub b: f64,
}

impl ModelState {
    /// Annotator standard deviations `1 / sqrt(lambda_j)`.
    pub fn sigma(&self) -> Vec<f64> {
        self.lambda.iter().map(|l| 1.0 / l.sqrt()).collect()
    }

    pub(crate) fn check_shape(&self, data: &AnnotationTable, width: usize) -> Result<()> {
        if self.z.len() != data.n_records()
            || self.phi.len() != data.n_annotators()
            || self.lambda.len() != data.n_annotators()
            || self.w.len() != width
        {
            return Err(Error::InvalidParameter(
                "model state does not match the data dimensions".into(),
            ));
        }
        Ok(())
    }

    /// Largest `|a - b| / (1 + |b|)` over every parameter, `b` from `self`.
    pub fn max_relative_change(&self, previous: &ModelState) -> f64 {
        fn rel(new: f64, old: f64) -> f64 {
            (new - old).abs() / (1.0 + new.abs())
        }
        let vec_max = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(&n, &o)| rel(n, o))
                .fold(0.0, f64::max)
        };
        [
            vec_max(&self.z, &previous.z),
            vec_max(&self.w, &previous.w),
            vec_max(&self.phi, &previous.phi),
            vec_max(&self.lambda, &previous.lambda),
            rel(self.alpha_phi, previous.alpha_phi),
            rel(self.b, previous.b),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_defaults() {
        let hp = Profile::Real.hyperparameters(PrecisionCap::fixed(0.04).unwrap());
        assert_eq!(
            (
                hp.k_b,
                hp.vartheta_b,
                hp.mu_phi,
                hp.k_alpha,
                hp.vartheta_alpha,
                hp.k_lambda
            ),
            (3.0, 0.0002, 10.0, 3.0, 0.0005, 4.0)
        );
        assert_eq!(hp.vartheta_lambda, 0.003);
        assert_eq!(Profile::Sim.vartheta_lambda(), 0.0003);
        assert_eq!("real".parse::<Profile>().unwrap(), Profile::Real);
        assert!("x".parse::<Profile>().is_err());
        hp.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_controls() {
        let base = Profile::Sim.hyperparameters(PrecisionCap::unbounded());
        let cases = [
            Hyperparameters {
                k_b: 0.0,
                ..base.clone()
            },
            Hyperparameters {
                vartheta_alpha: -1.0,
                ..base.clone()
            },
            Hyperparameters {
                max_iterations: 0,
                ..base.clone()
            },
            Hyperparameters {
                convergence_tol: 0.0,
                ..base.clone()
            },
        ];
        for hp in cases {
            assert!(hp.validate().is_err());
        }
        base.em_r().validate().unwrap();
    }

    #[test]
    fn flat_prior_contributes_nothing() {
        let flat = GammaPrior::new(1.0, f64::INFINITY);
        assert!(flat.is_flat());
        assert_eq!(flat.ln_pdf(3.0), 0.0);
        assert_eq!(flat.rate2(), 0.0);
        assert_eq!(flat.mean(), None);
        let g = GammaPrior::new(4.0, 0.003);
        assert!((g.mean().unwrap() - 0.012).abs() < 1e-15);
    }
}
