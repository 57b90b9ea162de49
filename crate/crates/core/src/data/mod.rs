//! Dataset model: sparse record x annotator label tables, per-record design
//! rows, CSV ingestion and the synthetic annotator simulator.
//!
//! All label values are in milliseconds. Absence of an annotation is encoded
//! by the observation mask only; masked-out cells are never read.

mod io;
mod simulate;

pub use io::{
    load_annotations, load_annotator_params, load_features, load_reference, save_annotations,
    save_simulation_truth,
};
pub use simulate::{simulate, SimulationParams, SimulationTruth};

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Sparse record x annotator matrix of continuous labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTable {
    record_ids: Vec<String>,
    annotator_ids: Vec<String>,
    /// Row-major, `n_records * n_annotators`.
    values: Vec<f64>,
    mask: Vec<bool>,
    by_record: Vec<Vec<(usize, f64)>>,
    by_annotator: Vec<Vec<(usize, f64)>>,
}

/// Observation counts: `per_annotator[j]` is N_j, `per_record[i]` is R_i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedCounts {
    pub per_annotator: Vec<usize>,
    pub per_record: Vec<usize>,
}

/// Result of restricting a table to a subset of records or annotators.
#[derive(Debug, Clone)]
pub struct Subset {
    pub table: AnnotationTable,
    /// Original record index of every row in `table`.
    pub records: Vec<usize>,
    /// Original annotator index of every column in `table`.
    pub annotators: Vec<usize>,
}

impl AnnotationTable {
    /// Builds a table from dense row-major values and mask, validating every
    /// invariant.
    pub fn from_dense(
        record_ids: Vec<String>,
        annotator_ids: Vec<String>,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let n = record_ids.len();
        let r = annotator_ids.len();
        if n == 0 || r == 0 {
            return Err(Error::InvalidParameter(
                "annotation table needs at least one record and one annotator".into(),
            ));
        }
        if values.len() != n * r || mask.len() != n * r {
            return Err(Error::InvalidParameter(format!(
                "expected {} cells, got {} values and {} mask entries",
                n * r,
                values.len(),
                mask.len()
            )));
        }
        ensure_unique(&record_ids, "record")?;
        ensure_unique(&annotator_ids, "annotator")?;

        let mut by_record = vec![Vec::new(); n];
        let mut by_annotator = vec![Vec::new(); r];
        for i in 0..n {
            for j in 0..r {
                let cell = i * r + j;
                if !mask[cell] {
                    continue;
                }
                let v = values[cell];
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "record `{}`, annotator `{}`",
                        record_ids[i], annotator_ids[j]
                    )));
                }
                by_record[i].push((j, v));
                by_annotator[j].push((i, v));
            }
        }
        if let Some(i) = by_record.iter().position(Vec::is_empty) {
            return Err(Error::EmptyRecord(record_ids[i].clone()));
        }
        if let Some(j) = by_annotator.iter().position(Vec::is_empty) {
            return Err(Error::EmptyAnnotator(annotator_ids[j].clone()));
        }

        Ok(Self {
            record_ids,
            annotator_ids,
            values,
            mask,
            by_record,
            by_annotator,
        })
    }

    /// Fully observed table from per-record rows.
    pub fn from_rows(
        record_ids: Vec<String>,
        annotator_ids: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        let mask = vec![true; values.len()];
        Self::from_dense(record_ids, annotator_ids, values, mask)
    }

    /// Table with generated ids (`r1..`, `a1..`) from optional cells.
    pub fn from_options(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::InvalidParameter("ragged rows".into()));
        }
        let values = rows.iter().flatten().map(|c| c.unwrap_or(0.0)).collect();
        let mask = rows.iter().flatten().map(Option::is_some).collect();
        Self::from_dense(
            (1..=n).map(|i| format!("r{i}")).collect(),
            (1..=r).map(|j| format!("a{j}")).collect(),
            values,
            mask,
        )
    }

    pub fn n_records(&self) -> usize {
        self.record_ids.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.annotator_ids.len()
    }

    pub fn n_observed(&self) -> usize {
        self.by_record.iter().map(Vec::len).sum()
    }

    pub fn record_ids(&self) -> &[String] {
        &self.record_ids
    }

    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_ids
    }

    /// The label given by annotator `j` to record `i`, if observed.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let cell = i * self.n_annotators() + j;
        self.mask[cell].then(|| self.values[cell])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_annotators() + j]
    }

    /// Observed `(annotator, value)` pairs of record `i`, in annotator order.
    pub fn by_record(&self, i: usize) -> &[(usize, f64)] {
        &self.by_record[i]
    }

    /// Observed `(record, value)` pairs of annotator `j`, in record order.
    pub fn by_annotator(&self, j: usize) -> &[(usize, f64)] {
        &self.by_annotator[j]
    }

    /// Every observed cell as `(record, annotator, value)`, record-major.
    pub fn observations(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.by_record
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn observed_counts(&self) -> ObservedCounts {
        ObservedCounts {
            per_annotator: self.by_annotator.iter().map(Vec::len).collect(),
            per_record: self.by_record.iter().map(Vec::len).collect(),
        }
    }

    /// Restricts the table to the given annotator columns (in the given
    /// order). Records left without any annotation are dropped.
    pub fn select_annotators(&self, annotators: &[usize]) -> Result<Subset> {
        let records: Vec<usize> = (0..self.n_records())
            .filter(|&i| annotators.iter().any(|&j| self.is_observed(i, j)))
            .collect();
        self.restrict(&records, annotators)
    }

    /// Restricts the table to the given record rows, which may repeat (as in
    /// a bootstrap resample). Repeated rows get `#k` suffixed ids. Annotators
    /// left without any annotation are dropped.
    pub fn select_records(&self, records: &[usize]) -> Result<Subset> {
        let annotators: Vec<usize> = (0..self.n_annotators())
            .filter(|&j| records.iter().any(|&i| self.is_observed(i, j)))
            .collect();
        self.restrict(records, &annotators)
    }

    fn restrict(&self, records: &[usize], annotators: &[usize]) -> Result<Subset> {
        let mut seen = vec![0usize; self.n_records()];
        let record_ids = records
            .iter()
            .map(|&i| {
                seen[i] += 1;
                if seen[i] == 1 {
                    self.record_ids[i].clone()
                } else {
                    format!("{}#{}", self.record_ids[i], seen[i])
                }
            })
            .collect();
        let annotator_ids = annotators
            .iter()
            .map(|&j| self.annotator_ids[j].clone())
            .collect();
        let mut values = Vec::with_capacity(records.len() * annotators.len());
        let mut mask = Vec::with_capacity(records.len() * annotators.len());
        for &i in records {
            for &j in annotators {
                let cell = i * self.n_annotators() + j;
                values.push(self.values[cell]);
                mask.push(self.mask[cell]);
            }
        }
        let table = Self::from_dense(record_ids, annotator_ids, values, mask)?;
        Ok(Subset {
            table,
            records: records.to_vec(),
            annotators: annotators.to_vec(),
        })
    }
}

fn ensure_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate {what} id `{id}`"
            )));
        }
    }
    Ok(())
}

/// Per-record design rows. When `has_intercept` is set a constant-1 column
/// is appended after the `d` raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    d: usize,
    has_intercept: bool,
    names: Vec<String>,
    /// Row-major design matrix including the intercept column.
    design: Vec<f64>,
    n_records: usize,
}

impl FeatureTable {
    /// `x_i = 1` for every record.
    pub fn intercept_only(n_records: usize) -> Self {
        Self {
            d: 0,
            has_intercept: true,
            names: vec!["intercept".into()],
            design: vec![1.0; n_records],
            n_records,
        }
    }

    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, intercept: bool) -> Result<Self> {
        let d = names.len();
        if d == 0 && !intercept {
            return Err(Error::InvalidParameter(
                "design matrix needs at least one feature or an intercept".into(),
            ));
        }
        let width = d + usize::from(intercept);
        let mut design = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "feature row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "feature row {i}, column {}",
                    names[k]
                )));
            }
            design.extend_from_slice(row);
            if intercept {
                design.push(1.0);
            }
        }
        let mut names = names;
        if intercept {
            names.push("intercept".into());
        }
        Ok(Self {
            d,
            has_intercept: intercept,
            names,
            design,
            n_records: rows.len(),
        })
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    /// Raw feature dimension, excluding the intercept.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Number of design columns (d plus one when an intercept is present).
    pub fn width(&self) -> usize {
        self.d + usize::from(self.has_intercept)
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.design[i * w..(i + 1) * w]
    }

    /// `x_i^T w`.
    pub fn predict(&self, i: usize, w: &[f64]) -> f64 {
        self.row(i).iter().zip(w).map(|(x, c)| x * c).sum()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let design = rows
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        Self {
            d: self.d,
            has_intercept: self.has_intercept,
            names: self.names.clone(),
            design,
            n_records: rows.len(),
        }
    }
}
