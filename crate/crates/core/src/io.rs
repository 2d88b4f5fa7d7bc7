//! CSV formats and external identifiers.
//!
//! All files carry a header row. Example and annotator identifiers are
//! arbitrary strings mapped to dense indices by [`IdMap`] in first-seen order.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, ProbabilityMatrix};

/// Largest row-sum deviation from 1 that external predictions may carry
/// before being renormalized instead of rejected.
pub const PREDICTION_SUM_TOLERANCE: f64 = 1e-6;

/// Formats a float with 17 significant digits so it parses back exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Dense index for string identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Map over `names` in order; duplicates are an error.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut map = Self::new();
        for name in names {
            if map.get(&name).is_some() {
                return Err(Error::Config(format!("duplicate identifier `{name}`")));
            }
            map.get_or_insert(&name);
        }
        Ok(map)
    }

    pub fn get_or_insert(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: line as usize,
        message: message.into(),
    }
}

/// Reads every data record with its 1-based file line number.
fn records(path: &Path, expected_header: Option<&[&str]>) -> Result<(csv::StringRecord, Vec<(u64, csv::StringRecord)>)> {
    let file = File::open(path).map_err(|e| parse_err(path, 0, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers()?.clone();
    if let Some(want) = expected_header {
        if header.iter().ne(want.iter().copied()) {
            return Err(parse_err(
                path,
                1,
                format!("expected header `{}`, found `{}`", want.join(","), header.iter().collect::<Vec<_>>().join(",")),
            ));
        }
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        out.push((line, record));
    }
    Ok((header, out))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{field}`")))
}

/// One raw annotation row with identifiers already mapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub example: usize,
    pub annotator: usize,
    pub label: usize,
    pub line: u64,
}

/// Reads `example_id,annotator_id,label`, registering identifiers.
pub fn read_annotations(path: &Path, examples: &mut IdMap, annotators: &mut IdMap) -> Result<Vec<AnnotationRecord>> {
    let (_, rows) = records(path, Some(&["example_id", "annotator_id", "label"]))?;
    rows.iter()
        .map(|(line, r)| {
            if r.len() != 3 {
                return Err(parse_err(path, *line, format!("expected 3 fields, found {}", r.len())));
            }
            Ok(AnnotationRecord {
                example: examples.get_or_insert(&r[0]),
                annotator: annotators.get_or_insert(&r[1]),
                label: parse_field(path, *line, &r[2], "label")?,
                line: *line,
            })
        })
        .collect()
}

struct NumericTable {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    lines: Vec<u64>,
    columns: usize,
}

/// Reads `example_id,<value columns>` into identifiers and float rows.
fn read_numeric_table(path: &Path, prefix: &str) -> Result<NumericTable> {
    let (header, rows) = records(path, None)?;
    if header.len() < 2 || &header[0] != "example_id" {
        return Err(parse_err(path, 1, format!("expected header `example_id,{prefix}0,...`")));
    }
    for (c, name) in header.iter().skip(1).enumerate() {
        if name != format!("{prefix}{c}") {
            return Err(parse_err(path, 1, format!("column {} should be `{prefix}{c}`, found `{name}`", c + 1)));
        }
    }
    let width = header.len();
    let mut names = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        if r.len() != width {
            return Err(parse_err(path, *line, format!("expected {width} fields, found {}", r.len())));
        }
        let row = r
            .iter()
            .skip(1)
            .map(|f| {
                let v: f64 = parse_field(path, *line, f, "number")?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(path, *line, format!("non-finite value `{f}`")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        names.push(r[0].to_string());
        values.push(row);
    }
    let mut seen = IdMap::new();
    for (name, (line, _)) in names.iter().zip(&rows) {
        if seen.get(name).is_some() {
            return Err(parse_err(path, *line, format!("duplicate example_id `{name}`")));
        }
        seen.get_or_insert(name);
    }
    Ok(NumericTable {
        names,
        rows: values,
        lines: rows.iter().map(|(line, _)| *line).collect(),
        columns: width - 1,
    })
}

/// Reads `example_id,f_0,…,f_{d-1}`.
pub fn read_features(path: &Path) -> Result<(Vec<String>, FeatureMatrix)> {
    let table = read_numeric_table(path, "f_")?;
    if table.rows.is_empty() {
        return Err(parse_err(path, 1, "no feature rows"));
    }
    Ok((table.names, FeatureMatrix::from_rows(&table.rows)?))
}

/// Reads `example_id,label`.
pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    let (_, rows) = records(path, Some(&["example_id", "label"]))?;
    rows.iter()
        .map(|(line, r)| {
            if r.len() != 2 {
                return Err(parse_err(path, *line, format!("expected 2 fields, found {}", r.len())));
            }
            Ok((r[0].to_string(), parse_field(path, *line, &r[1], "label")?))
        })
        .collect()
}

/// Reads `example_id,p_0,…,p_{K-1}`, renormalizing rows whose sum is within
/// [`PREDICTION_SUM_TOLERANCE`] of 1 and rejecting the rest.
pub fn read_predictions(path: &Path) -> Result<(Vec<String>, ProbabilityMatrix)> {
    let NumericTable {
        names,
        mut rows,
        lines,
        columns: k,
    } = read_numeric_table(path, "p_")?;
    for (row, line) in rows.iter_mut().zip(&lines) {
        if row.iter().any(|&p| p < 0.0) {
            return Err(parse_err(path, *line, "negative probability"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PREDICTION_SUM_TOLERANCE {
            return Err(parse_err(path, *line, format!("probabilities sum to {sum}, not 1")));
        }
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    if k < 2 {
        return Err(parse_err(path, 1, "predictions need at least two classes"));
    }
    Ok((names, ProbabilityMatrix::from_rows(k, &rows)?))
}

/// Predictions aligned to `names`; every name must be present.
pub fn load_external_predictions(path: &Path, names: &[String]) -> Result<ProbabilityMatrix> {
    let (ids, preds) = read_predictions(path)?;
    align_rows(&ids, &preds, names)
}

/// Reorders `preds` (indexed like `ids`) to follow `names`.
pub fn align_rows(ids: &[String], preds: &ProbabilityMatrix, names: &[String]) -> Result<ProbabilityMatrix> {
    let map = IdMap::from_names(ids.to_vec())?;
    let rows = names
        .iter()
        .map(|name| {
            map.get(name)
                .map(|i| preds.row(i).to_vec())
                .ok_or_else(|| Error::MissingPredictions(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    ProbabilityMatrix::from_rows(preds.num_classes(), &rows)
}

/// CSV writer that always uses `\n` line endings.
pub fn csv_writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(inner)
}

pub fn write_labels(path: &Path, names: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv_writer(File::create(path)?);
    w.write_record(["example_id", "label"])?;
    for (name, label) in names.iter().zip(labels) {
        w.write_record([name.as_str(), &label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_features(path: &Path, names: &[String], x: &FeatureMatrix) -> Result<()> {
    let mut w = csv_writer(File::create(path)?);
    let mut header = vec!["example_id".to_string()];
    header.extend((0..x.dim()).map(|c| format!("f_{c}")));
    w.write_record(&header)?;
    for (i, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(x.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions(path: &Path, names: &[String], preds: &ProbabilityMatrix) -> Result<()> {
    let mut w = csv_writer(File::create(path)?);
    let mut header = vec!["example_id".to_string()];
    header.extend((0..preds.num_classes()).map(|c| format!("p_{c}")));
    w.write_record(&header)?;
    for (i, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(preds.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
