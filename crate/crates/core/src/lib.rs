//! Fusion of continuous labels from several biased, noisy annotators.
//!
//! The core model treats each annotator as adding a fixed offset and
//! Gaussian noise of their own to a latent true value, which in turn is
//! regressed on record features. Parameters are fitted by MAP
//! expectation-maximisation, with annotator precisions capped by an
//! extreme-value bound derived from their prior.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bcla;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gevd;
pub mod rng;

pub use baselines::{aggregate, BaselineEstimate, Method};
pub use bcla::{run_em, EmTrace, Hyperparameters, ModelState, Profile};
pub use data::{AnnotationTable, FeatureTable};
pub use error::{Error, ErrorKind, Result};
pub use gevd::PrecisionCap;
