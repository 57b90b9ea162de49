//! Reference aggregators: mean and median voting, the bias-free EM-R
//! reduction of the model, and the supervised best-annotator diagnostic.

use std::fmt;
use std::str::FromStr;

use crate::bcla::{run_em, EmTrace, Hyperparameters, ModelState};
use crate::data::{AnnotationTable, FeatureTable};
use crate::error::{Error, Result};

/// Every aggregation method the harness knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mean,
    Median,
    EmR,
    Bcla,
    /// Consumes the reference labels; a supervised diagnostic only.
    BestAnnotator,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mean,
        Method::Median,
        Method::EmR,
        Method::Bcla,
        Method::BestAnnotator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Median => "median",
            Method::EmR => "em_r",
            Method::Bcla => "bcla",
            Method::BestAnnotator => "best_annotator",
        }
    }

    pub fn is_supervised(self) -> bool {
        self == Method::BestAnnotator
    }

    /// Parses a comma-separated list such as `mean,median,bcla`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Method = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidParameter("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// Method-specific by-products.
#[derive(Debug, Clone, PartialEq)]
pub enum Extras {
    None,
    /// Fitted EM state and trace (BCLA, or EM-R with bias pinned at zero).
    Em {
        state: ModelState,
        trace: EmTrace,
    },
    BestAnnotator(BestAnnotatorChoice),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestAnnotatorChoice {
    pub annotator: usize,
    pub annotator_id: String,
    /// Mean of `y - reference` over the annotator's records.
    pub bias: f64,
    /// Standard deviation of the residual after removing `bias`.
    pub residual_sd: f64,
    pub scoring: BestAnnotatorScoring,
}

/// What the best-annotator estimate reports for the chosen annotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BestAnnotatorScoring {
    /// The annotator's own labels.
    #[default]
    Raw,
    /// Labels minus the annotator's estimated bias.
    BiasCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEstimate {
    pub method: Method,
    /// Per-record estimate; `None` where the method produced nothing.
    pub z_hat: Vec<Option<f64>>,
    pub extras: Extras,
}

impl BaselineEstimate {
    /// Per-annotator standard deviations, for methods that estimate them.
    pub fn sigma(&self) -> Option<Vec<f64>> {
        match &self.extras {
            Extras::Em { state, .. } => Some(state.sigma()),
            _ => None,
        }
    }
}

pub fn aggregate_mean(data: &AnnotationTable) -> BaselineEstimate {
    let z_hat = (0..data.n_records())
        .map(|i| {
            let obs = data.by_record(i);
            Some(obs.iter().map(|&(_, y)| y).sum::<f64>() / obs.len() as f64)
        })
        .collect();
    BaselineEstimate {
        method: Method::Mean,
        z_hat,
        extras: Extras::None,
    }
}

/// Per-record median; even counts average the two central labels.
pub fn aggregate_median(data: &AnnotationTable) -> BaselineEstimate {
    let z_hat = (0..data.n_records())
        .map(|i| {
            let mut ys: Vec<f64> = data.by_record(i).iter().map(|&(_, y)| y).collect();
            ys.sort_by(f64::total_cmp);
            let n = ys.len();
            Some(if n % 2 == 1 {
                ys[n / 2]
            } else {
                0.5 * (ys[n / 2 - 1] + ys[n / 2])
            })
        })
        .collect();
    BaselineEstimate {
        method: Method::Median,
        z_hat,
        extras: Extras::None,
    }
}

/// Maximum-likelihood EM without annotator bias: the model with every
/// `phi_j = 0`, no bias hyperprior and flat precision priors. The precision
/// cap and EM controls come from `hp`.
pub fn aggregate_em_r(
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> Result<BaselineEstimate> {
    let (state, trace) = run_em(data, feats, &hp.em_r())?;
    Ok(BaselineEstimate {
        method: Method::EmR,
        z_hat: state.z.iter().copied().map(Some).collect(),
        extras: Extras::Em { state, trace },
    })
}

/// Full model fit, wrapped as an estimate.
pub fn aggregate_bcla(
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
) -> Result<BaselineEstimate> {
    let (state, trace) = run_em(data, feats, hp)?;
    Ok(BaselineEstimate {
        method: Method::Bcla,
        z_hat: state.z.iter().copied().map(Some).collect(),
        extras: Extras::Em { state, trace },
    })
}

/// Runs any method. `reference` is only consulted by the supervised
/// best-annotator diagnostic.
pub fn aggregate(
    method: Method,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &Hyperparameters,
    reference: Option<&[Option<f64>]>,
) -> Result<BaselineEstimate> {
    match method {
        Method::Mean => Ok(aggregate_mean(data)),
        Method::Median => Ok(aggregate_median(data)),
        Method::EmR => aggregate_em_r(data, feats, hp),
        Method::Bcla => aggregate_bcla(data, feats, hp),
        Method::BestAnnotator => {
            let reference = reference.ok_or_else(|| Error::NoReference(method.name().into()))?;
            best_annotator(data, reference, BestAnnotatorScoring::default())
        }
    }
}

/// Picks the annotator whose labels have the smallest residual variance
/// around the reference once their mean offset is removed.
///
/// Records the chosen annotator did not label come back as `None`.
/// Annotators with fewer than two referenced labels are not eligible.
pub fn best_annotator(
    data: &AnnotationTable,
    reference: &[Option<f64>],
    scoring: BestAnnotatorScoring,
) -> Result<BaselineEstimate> {
    if reference.len() != data.n_records() || reference.iter().all(Option::is_none) {
        return Err(Error::NoReference("the best-annotator diagnostic".into()));
    }

    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..data.n_annotators() {
        let resid: Vec<f64> = data
            .by_annotator(j)
            .iter()
            .filter_map(|&(i, y)| reference[i].map(|r| y - r))
            .collect();
        if resid.len() < 2 {
            continue;
        }
        let n = resid.len() as f64;
        let bias = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / n;
        if best.is_none_or(|(_, _, v)| var < v) {
            best = Some((j, bias, var));
        }
    }
    let (j, bias, var) = best.ok_or_else(|| {
        Error::NoReference("the best-annotator diagnostic (no annotator overlaps it twice)".into())
    })?;

    let offset = match scoring {
        BestAnnotatorScoring::Raw => 0.0,
        BestAnnotatorScoring::BiasCorrected => bias,
    };
    let z_hat = (0..data.n_records())
        .map(|i| data.get(i, j).map(|y| y - offset))
        .collect();
    Ok(BaselineEstimate {
        method: Method::BestAnnotator,
        z_hat,
        extras: Extras::BestAnnotator(BestAnnotatorChoice {
            annotator: j,
            annotator_id: data.annotator_ids()[j].clone(),
            bias,
            residual_sd: var.sqrt(),
            scoring,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcla::Profile;
    use crate::gevd::PrecisionCap;
    use approx::assert_relative_eq;

    fn table(rows: &[Vec<Option<f64>>]) -> AnnotationTable {
        AnnotationTable::from_options(rows).unwrap()
    }

    #[test]
    fn mean_and_median_small_cases() {
        let t = table(&[
            vec![Some(10.0), Some(20.0), None],
            vec![Some(400.0), None, None],
            vec![Some(10.0), Some(20.0), Some(90.0)],
        ]);
        assert_eq!(
            aggregate_mean(&t).z_hat,
            vec![Some(15.0), Some(400.0), Some(40.0)]
        );
        assert_eq!(
            aggregate_median(&t).z_hat,
            vec![Some(15.0), Some(400.0), Some(20.0)]
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(
            Method::parse_list("mean, median,em_r,bcla,mean").unwrap(),
            vec![Method::Mean, Method::Median, Method::EmR, Method::Bcla]
        );
        assert!(Method::parse_list("mean,vote").is_err());
        assert!(Method::parse_list("").is_err());
    }

    #[test]
    fn em_r_single_annotator_reproduces_labels() {
        let t = table(&[vec![Some(400.0)], vec![Some(380.0)], vec![Some(455.0)]]);
        let hp = Profile::Real.hyperparameters(PrecisionCap::fixed(1e6).unwrap());
        let est = aggregate_em_r(&t, &FeatureTable::intercept_only(3), &hp).unwrap();
        for (z, y) in est.z_hat.iter().zip([400.0, 380.0, 455.0]) {
            assert_relative_eq!(z.unwrap(), y, epsilon = 1e-6);
        }
        match est.extras {
            Extras::Em { state, .. } => assert!(state.phi.iter().all(|&p| p == 0.0)),
            _ => panic!("missing EM-R state"),
        }
    }

    #[test]
    fn best_annotator_perfect_after_offset() {
        let truth = [400.0, 380.0, 455.0, 410.0];
        let rows: Vec<Vec<Option<f64>>> = truth
            .iter()
            .enumerate()
            .map(|(i, &z)| vec![Some(z + 5.0), Some(z + if i % 2 == 0 { 3.0 } else { -3.0 })])
            .collect();
        let t = table(&rows);
        let reference: Vec<Option<f64>> = truth.iter().copied().map(Some).collect();
        let est = best_annotator(&t, &reference, BestAnnotatorScoring::BiasCorrected).unwrap();
        let Extras::BestAnnotator(choice) = &est.extras else {
            panic!("missing choice")
        };
        assert_eq!(choice.annotator, 0);
        assert_relative_eq!(choice.bias, 5.0, epsilon = 1e-12);
        for (z, r) in est.z_hat.iter().zip(truth) {
            assert_relative_eq!(z.unwrap(), r, epsilon = 1e-12);
        }
        let raw = best_annotator(&t, &reference, BestAnnotatorScoring::Raw).unwrap();
        assert_eq!(raw.z_hat[0], Some(405.0));
    }

    #[test]
    fn best_annotator_argmin_and_missing_records() {
        // Annotator 1 residuals +-1, annotator 2 residuals +-2, annotator 2
        // also misses record 4.
        let rows = vec![
            vec![Some(1.0), Some(2.0)],
            vec![Some(-1.0), Some(-2.0)],
            vec![Some(1.0), Some(2.0)],
            vec![Some(-1.0), None],
        ];
        let t = table(&rows);
        let reference = vec![Some(0.0); 4];
        let est = best_annotator(&t, &reference, BestAnnotatorScoring::Raw).unwrap();
        let Extras::BestAnnotator(choice) = &est.extras else {
            panic!()
        };
        assert_eq!(choice.annotator_id, "a1");

        let t = table(&[
            vec![None, Some(2.0)],
            vec![Some(1.0), Some(2.5)],
            vec![Some(2.0), Some(2.0)],
        ]);
        let reference = vec![Some(2.0), Some(1.0), Some(2.0)];
        let est = best_annotator(&t, &reference, BestAnnotatorScoring::Raw).unwrap();
        assert_eq!(est.z_hat, vec![None, Some(1.0), Some(2.0)]);
    }

    #[test]
    fn best_annotator_needs_reference() {
        let t = table(&[vec![Some(1.0)], vec![Some(2.0)]]);
        assert!(matches!(
            best_annotator(&t, &[None, None], BestAnnotatorScoring::Raw),
            Err(Error::NoReference(_))
        ));
        assert!(best_annotator(&t, &[Some(1.0)], BestAnnotatorScoring::Raw).is_err());
    }
}
