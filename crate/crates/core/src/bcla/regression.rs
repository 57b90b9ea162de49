use nalgebra::{DMatrix, DVector};

use crate::data::FeatureTable;
use crate::error::{Error, Result};

/// Least-squares solver for `z ~ X w` with the design matrix factorized once.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Pseudo-inverse of the design matrix, `width x n`.
    pinv: DMatrix<f64>,
}

impl LeastSquares {
    /// Factorizes the design matrix with an SVD. Fails when it is not of
    /// full column rank, naming every column that is linearly dependent on
    /// the columns before it.
    pub fn new(feats: &FeatureTable) -> Result<Self> {
        let n = feats.n_records();
        let p = feats.width();
        let x = DMatrix::from_fn(n, p, |i, c| feats.row(i)[c]);

        let dependent = dependent_columns(&x);
        if !dependent.is_empty() {
            return Err(Error::RankDeficient {
                columns: dependent
                    .into_iter()
                    .map(|c| feats.column_names()[c].clone())
                    .collect(),
            });
        }
        let svd = x.svd(true, true);
        let tol = rank_tol(&svd.singular_values, n, p);
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Self { pinv })
    }

    pub fn solve(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        (&self.pinv * z).iter().copied().collect()
    }
}

fn rank_tol(sv: &DVector<f64>, n: usize, p: usize) -> f64 {
    sv.max() * n.max(p) as f64 * f64::EPSILON
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let tol = rank_tol(&sv, m.nrows(), m.ncols());
    sv.iter().filter(|&&s| s > tol).count()
}

fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    if rank(x) == x.ncols() {
        return Vec::new();
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for c in 0..x.ncols() {
        let mut trial = kept.clone();
        trial.push(c);
        if rank(&x.select_columns(&trial)) == trial.len() {
            kept = trial;
        } else {
            dependent.push(c);
        }
    }
    dependent
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn intercept_only_is_the_mean() {
        let ls = LeastSquares::new(&FeatureTable::intercept_only(3)).unwrap();
        assert_relative_eq!(ls.solve(&[1.0, 2.0, 3.0])[0], 2.0, max_relative = 1e-14);
        assert_eq!(ls.solve(&[0.0, 0.0, 0.0]), vec![0.0]);
    }

    #[test]
    fn exact_fit_without_intercept() {
        let f = FeatureTable::new(vec!["f1".into()], vec![vec![1.0], vec![2.0]], false).unwrap();
        let ls = LeastSquares::new(&f).unwrap();
        assert_relative_eq!(ls.solve(&[2.0, 4.0])[0], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let f = FeatureTable::new(
            vec!["f1".into(), "f2".into()],
            vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]],
            true,
        )
        .unwrap();
        match LeastSquares::new(&f) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["f2"]),
            other => panic!("expected rank error, got {other:?}"),
        }
        // A constant feature duplicates the intercept.
        let f = FeatureTable::new(vec!["c".into()], vec![vec![5.0], vec![5.0]], true).unwrap();
        match LeastSquares::new(&f) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["intercept"]),
            other => panic!("expected rank error, got {other:?}"),
        }
    }
}
