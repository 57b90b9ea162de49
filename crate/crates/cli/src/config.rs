//! Flat `key = value` run configuration.
//!
//! Values are resolved in order: built-in defaults, profile, config file,
//! command-line flags. `run_manifest.json` files written by earlier runs are
//! accepted as config files too, which is how a run is replayed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bcla::baselines::{BestAnnotatorScoring, Method};
use bcla::data::SimulationParams;
use bcla::gevd::{precision_upper_bound_with, PrecisionCap, DEFAULT_N_BLOCKS};
use bcla::{Error, Hyperparameters, Profile, Result};

/// Seed used when none is given. With it, `simulate`, `aggregate` and
/// `evaluate` on defaults reproduce the simulated study's ordering.
pub const DEFAULT_SEED: u64 = 157_883;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out: PathBuf,
    pub annotations: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub seed: u64,
    pub profile: Profile,
    pub methods: Option<Vec<Method>>,
    pub refit: bool,
    pub n_boot: usize,
    pub reps: usize,
    pub sizes: Option<Vec<usize>>,
    pub intercept: bool,
    pub best_annotator_scoring: BestAnnotatorScoring,

    pub records: usize,
    pub annotators: usize,
    pub density: f64,
    pub sim_bias_mean: f64,
    pub sim_bias_sd: f64,
    pub sim_truth_mean: f64,
    pub sim_truth_sd: f64,
    pub sim_k_lambda: f64,
    pub sim_vartheta_lambda: Option<f64>,

    pub k_b: Option<f64>,
    pub vartheta_b: Option<f64>,
    pub mu_phi: Option<f64>,
    pub k_alpha: Option<f64>,
    pub vartheta_alpha: Option<f64>,
    pub k_lambda: Option<f64>,
    pub vartheta_lambda: Option<f64>,
    pub max_iterations: Option<usize>,
    pub convergence_tol: Option<f64>,
    /// Fixes the precision cap instead of deriving it.
    pub lambda_max: Option<f64>,
    pub cap_block_size: Option<usize>,
    pub cap_blocks: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimulationParams::default();
        Self {
            out: PathBuf::from("."),
            annotations: None,
            features: None,
            reference: None,
            truth: None,
            seed: DEFAULT_SEED,
            profile: Profile::Sim,
            methods: None,
            refit: false,
            n_boot: 100,
            reps: 100,
            sizes: None,
            intercept: true,
            best_annotator_scoring: BestAnnotatorScoring::Raw,
            records: sim.n_records,
            annotators: sim.n_annotators,
            density: sim.density,
            sim_bias_mean: sim.bias_mean,
            sim_bias_sd: sim.bias_sd,
            sim_truth_mean: sim.truth_mean,
            sim_truth_sd: sim.truth_sd,
            sim_k_lambda: sim.k_lambda,
            sim_vartheta_lambda: None,
            k_b: None,
            vartheta_b: None,
            mu_phi: None,
            k_alpha: None,
            vartheta_alpha: None,
            k_lambda: None,
            vartheta_lambda: None,
            max_iterations: None,
            convergence_tol: None,
            lambda_max: None,
            cap_block_size: None,
            cap_blocks: DEFAULT_N_BLOCKS,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidParameter(format!("config key `{key}`: cannot parse `{value}`"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn opt_num<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref()
        .map_or_else(String::new, |p| p.display().to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "out" => self.out = PathBuf::from(value),
            "annotations" => self.annotations = opt_path(value),
            "features" => self.features = opt_path(value),
            "reference" => self.reference = opt_path(value),
            "truth" => self.truth = opt_path(value),
            "seed" => self.seed = num(key, value)?,
            "profile" => self.profile = value.parse()?,
            "method" | "methods" => {
                self.methods = if value.is_empty() || value == "auto" {
                    None
                } else {
                    Some(Method::parse_list(value)?)
                }
            }
            "refit" => self.refit = boolean(key, value)?,
            "n_boot" => self.n_boot = num(key, value)?,
            "reps" => self.reps = num(key, value)?,
            "sizes" => {
                self.sizes = if value.is_empty() || value == "auto" {
                    None
                } else {
                    Some(parse_sizes(value)?)
                }
            }
            "intercept" => self.intercept = boolean(key, value)?,
            "best_annotator_scoring" => {
                self.best_annotator_scoring = match value {
                    "raw" => BestAnnotatorScoring::Raw,
                    "bias_corrected" => BestAnnotatorScoring::BiasCorrected,
                    _ => return Err(bad(key, value)),
                }
            }
            "records" => self.records = num(key, value)?,
            "annotators" => self.annotators = num(key, value)?,
            "density" => self.density = num(key, value)?,
            "sim_bias_mean" => self.sim_bias_mean = num(key, value)?,
            "sim_bias_sd" => self.sim_bias_sd = num(key, value)?,
            "sim_truth_mean" => self.sim_truth_mean = num(key, value)?,
            "sim_truth_sd" => self.sim_truth_sd = num(key, value)?,
            "sim_k_lambda" => self.sim_k_lambda = num(key, value)?,
            "sim_vartheta_lambda" => self.sim_vartheta_lambda = opt_num(key, value)?,
            "k_b" => self.k_b = opt_num(key, value)?,
            "vartheta_b" => self.vartheta_b = opt_num(key, value)?,
            "mu_phi" => self.mu_phi = opt_num(key, value)?,
            "k_alpha" => self.k_alpha = opt_num(key, value)?,
            "vartheta_alpha" => self.vartheta_alpha = opt_num(key, value)?,
            "k_lambda" => self.k_lambda = opt_num(key, value)?,
            "vartheta_lambda" => self.vartheta_lambda = opt_num(key, value)?,
            "max_iterations" => self.max_iterations = opt_num(key, value)?,
            "convergence_tol" => self.convergence_tol = opt_num(key, value)?,
            "lambda_max" => self.lambda_max = opt_num(key, value)?,
            "cap_block_size" => self.cap_block_size = opt_num(key, value)?,
            "cap_blocks" => self.cap_blocks = num(key, value)?,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown config key `{key}`"
                )))
            }
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn pairs(&self) -> BTreeMap<&'static str, String> {
        let methods = self.methods.as_ref().map_or_else(
            || "auto".to_string(),
            |ms| ms.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
        );
        let sizes = self.sizes.as_ref().map_or_else(
            || "auto".to_string(),
            |s| s.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        let scoring = match self.best_annotator_scoring {
            BestAnnotatorScoring::Raw => "raw",
            BestAnnotatorScoring::BiasCorrected => "bias_corrected",
        };
        let profile = match self.profile {
            Profile::Sim => "sim",
            Profile::Real => "real",
        };
        BTreeMap::from([
            ("out", self.out.display().to_string()),
            ("annotations", show_path(&self.annotations)),
            ("features", show_path(&self.features)),
            ("reference", show_path(&self.reference)),
            ("truth", show_path(&self.truth)),
            ("seed", self.seed.to_string()),
            ("profile", profile.to_string()),
            ("method", methods),
            ("refit", self.refit.to_string()),
            ("n_boot", self.n_boot.to_string()),
            ("reps", self.reps.to_string()),
            ("sizes", sizes),
            ("intercept", self.intercept.to_string()),
            ("best_annotator_scoring", scoring.to_string()),
            ("records", self.records.to_string()),
            ("annotators", self.annotators.to_string()),
            ("density", self.density.to_string()),
            ("sim_bias_mean", self.sim_bias_mean.to_string()),
            ("sim_bias_sd", self.sim_bias_sd.to_string()),
            ("sim_truth_mean", self.sim_truth_mean.to_string()),
            ("sim_truth_sd", self.sim_truth_sd.to_string()),
            ("sim_k_lambda", self.sim_k_lambda.to_string()),
            ("sim_vartheta_lambda", show(&self.sim_vartheta_lambda)),
            ("k_b", show(&self.k_b)),
            ("vartheta_b", show(&self.vartheta_b)),
            ("mu_phi", show(&self.mu_phi)),
            ("k_alpha", show(&self.k_alpha)),
            ("vartheta_alpha", show(&self.vartheta_alpha)),
            ("k_lambda", show(&self.k_lambda)),
            ("vartheta_lambda", show(&self.vartheta_lambda)),
            ("max_iterations", show(&self.max_iterations)),
            ("convergence_tol", show(&self.convergence_tol)),
            ("lambda_max", show(&self.lambda_max)),
            ("cap_block_size", show(&self.cap_block_size)),
            ("cap_blocks", self.cap_blocks.to_string()),
        ])
    }

    /// Applies a config file on top of `self`.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if text.trim_start().starts_with('{') {
            return self.load_manifest(path, &text);
        }
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Malformed {
                path: path.to_path_buf(),
                line: n as u64 + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    fn load_manifest(&mut self, path: &Path, text: &str) -> Result<()> {
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: 0,
            message,
        };
        let json: serde_json::Value =
            serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let config = json
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| malformed("manifest has no `config` object".into()))?;
        for (key, value) in config {
            let value = value
                .as_str()
                .ok_or_else(|| malformed(format!("`{key}` is not a string")))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn simulation_params(&self) -> SimulationParams {
        SimulationParams {
            n_records: self.records,
            n_annotators: self.annotators,
            k_lambda: self.sim_k_lambda,
            vartheta_lambda: self
                .sim_vartheta_lambda
                .unwrap_or_else(|| self.profile.vartheta_lambda()),
            bias_mean: self.sim_bias_mean,
            bias_sd: self.sim_bias_sd,
            truth_mean: self.sim_truth_mean,
            truth_sd: self.sim_truth_sd,
            density: self.density,
        }
    }

    /// Profile defaults plus overrides, with the cap derived for a pool of
    /// `n_annotators` unless `lambda_max` fixes it.
    pub fn hyperparameters(&self, n_annotators: usize) -> Result<Hyperparameters> {
        let mut hp = self.profile.hyperparameters(PrecisionCap::unbounded());
        macro_rules! apply {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    hp.$field = v;
                }
            )*};
        }
        apply!(
            k_b,
            vartheta_b,
            mu_phi,
            k_alpha,
            vartheta_alpha,
            k_lambda,
            vartheta_lambda,
            max_iterations,
            convergence_tol
        );
        hp.cap = match self.lambda_max {
            Some(v) => PrecisionCap::fixed(v)?,
            None => precision_upper_bound_with(
                hp.k_lambda,
                hp.vartheta_lambda,
                self.cap_block_size.unwrap_or(n_annotators),
                self.cap_blocks,
                self.seed,
            )?,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn annotations_path(&self) -> PathBuf {
        self.annotations
            .clone()
            .unwrap_or_else(|| self.out.join("annotations.csv"))
    }

    /// Explicit reference file, else the simulator's `truth.csv` if present.
    pub fn reference_path(&self) -> Option<PathBuf> {
        if let Some(p) = &self.reference {
            return Some(p.clone());
        }
        let truth = self.truth_path();
        truth.exists().then_some(truth)
    }

    pub fn truth_path(&self) -> PathBuf {
        self.truth
            .clone()
            .unwrap_or_else(|| self.out.join("truth.csv"))
    }

    /// `annotators_truth.csv` next to the truth file.
    pub fn annotator_truth_path(&self) -> PathBuf {
        let truth = self.truth_path();
        truth
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("annotators_truth.csv")
    }
}

/// `3,5,8` or an inclusive range `3..20`.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let err = || Error::InvalidParameter(format!("cannot parse sweep sizes `{s}`"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| err())?;
        let hi: usize = hi
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| err())?;
        if lo > hi {
            return Err(err());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| err()))
        .collect()
}
