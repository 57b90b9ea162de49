use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AnnotationTable, FeatureTable, SimulationTruth};
use crate::error::{Error, Result};

const ANNOTATION_HEADER: [&str; 3] = ["record_id", "annotator_id", "value_ms"];

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, csv::Position::line);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => malformed(path, line, format!("{kind:?}")),
    }
}

fn parse_value(path: &Path, line: u64, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| malformed(path, line, format!("`{field}` is not a decimal number")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{}, line {line}", path.display())));
    }
    Ok(v)
}

/// Reads a long-format `record_id,annotator_id,value_ms` file. Rows and
/// columns are ordered by first appearance.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationTable> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(ANNOTATION_HEADER) {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`", ANNOTATION_HEADER.join(",")),
        ));
    }

    let mut records: Vec<String> = Vec::new();
    let mut annotators: Vec<String> = Vec::new();
    let mut record_index = HashMap::new();
    let mut annotator_index = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();

    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, csv::Position::line);
        if row.len() != 3 {
            return Err(malformed(
                path,
                line,
                format!("expected 3 fields, got {}", row.len()),
            ));
        }
        let (rec, ann) = (&row[0], &row[1]);
        if rec.is_empty() || ann.is_empty() {
            return Err(malformed(path, line, "empty identifier"));
        }
        let value = parse_value(path, line, &row[2])?;
        let i = *record_index.entry(rec.to_owned()).or_insert_with(|| {
            records.push(rec.to_owned());
            records.len() - 1
        });
        let j = *annotator_index.entry(ann.to_owned()).or_insert_with(|| {
            annotators.push(ann.to_owned());
            annotators.len() - 1
        });
        if cells.insert((i, j), value).is_some() {
            return Err(Error::DuplicatePair {
                record: rec.to_owned(),
                annotator: ann.to_owned(),
                line,
            });
        }
    }

    let r = annotators.len();
    let mut values = vec![0.0; records.len() * r];
    let mut mask = vec![false; records.len() * r];
    for ((i, j), v) in cells {
        values[i * r + j] = v;
        mask[i * r + j] = true;
    }
    AnnotationTable::from_dense(records, annotators, values, mask)
}

/// Writes a table in long format, record-major, annotator order within a
/// record. Values use the shortest round-trip decimal representation.
pub fn save_annotations(table: &AnnotationTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", ANNOTATION_HEADER.join(",")).map_err(io)?;
    for (i, j, v) in table.observations() {
        writeln!(
            out,
            "{},{},{}",
            table.record_ids()[i],
            table.annotator_ids()[j],
            v
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads `record_id,f1,...,fd` and aligns the rows to `record_ids`.
pub fn load_features(
    path: impl AsRef<Path>,
    record_ids: &[String],
    intercept: bool,
) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("record_id") {
        return Err(malformed(path, 1, "first column must be `record_id`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let position: HashMap<&str, usize> = record_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut rows: Vec<Option<Vec<f64>>> = vec![None; record_ids.len()];
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, csv::Position::line);
        if row.len() != names.len() + 1 {
            return Err(malformed(
                path,
                line,
                format!("expected {} fields, got {}", names.len() + 1, row.len()),
            ));
        }
        let &i = position
            .get(&row[0])
            .ok_or_else(|| Error::ExtraRecord(row[0].to_owned()))?;
        if rows[i].is_some() {
            return Err(malformed(
                path,
                line,
                format!("duplicate record `{}`", &row[0]),
            ));
        }
        let feats = row
            .iter()
            .skip(1)
            .map(|f| parse_value(path, line, f))
            .collect::<Result<Vec<_>>>()?;
        rows[i] = Some(feats);
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::MissingRecord(record_ids[i].clone())))
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::new(names, rows, intercept)
}

/// Reads a two-column `record_id,<value>` file and aligns it to
/// `record_ids`. Records absent from the file map to `None`; ids in the file
/// that are unknown are ignored.
pub fn load_reference(path: impl AsRef<Path>, record_ids: &[String]) -> Result<Vec<Option<f64>>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != 2 || &header[0] != "record_id" {
        return Err(malformed(
            path,
            1,
            "expected header `record_id,<value column>`",
        ));
    }
    let position: HashMap<&str, usize> = record_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut out = vec![None; record_ids.len()];
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, csv::Position::line);
        if row.len() != 2 {
            return Err(malformed(path, line, "expected 2 fields"));
        }
        let v = parse_value(path, line, &row[1])?;
        if let Some(&i) = position.get(&row[0]) {
            out[i] = Some(v);
        }
    }
    Ok(out)
}

/// Reads per-annotator `(phi, sigma)` from the first three columns of an
/// `annotator_id,<phi>,<sigma>,...` file, aligned to `annotator_ids`.
/// Both the simulator's truth file and fitted annotator tables qualify.
pub fn load_annotator_params(
    path: impl AsRef<Path>,
    annotator_ids: &[String],
) -> Result<Vec<Option<(f64, f64)>>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || &header[0] != "annotator_id" {
        return Err(malformed(
            path,
            1,
            "expected header `annotator_id,<phi>,<sigma>,...`",
        ));
    }
    let position: HashMap<&str, usize> = annotator_ids
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), j))
        .collect();
    let mut out = vec![None; annotator_ids.len()];
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, csv::Position::line);
        let phi = parse_value(path, line, &row[1])?;
        let sigma = parse_value(path, line, &row[2])?;
        if let Some(&j) = position.get(&row[0]) {
            out[j] = Some((phi, sigma));
        }
    }
    Ok(out)
}

/// Writes `truth.csv` and `annotators_truth.csv` into `dir`.
pub fn save_simulation_truth(
    truth: &SimulationTruth,
    table: &AnnotationTable,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    let path = dir.join("truth.csv");
    let mut out = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(out, "record_id,z_true_ms").map_err(io)?;
    for (id, z) in table.record_ids().iter().zip(&truth.z_true) {
        writeln!(out, "{id},{z}").map_err(io)?;
    }
    out.flush().map_err(io)?;

    let path = dir.join("annotators_truth.csv");
    let mut out = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(out, "annotator_id,phi_true_ms,sigma_true_ms").map_err(io)?;
    for ((id, phi), sigma) in table
        .annotator_ids()
        .iter()
        .zip(&truth.phi_true)
        .zip(&truth.sigma_true)
    {
        writeln!(out, "{id},{phi},{sigma}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}
