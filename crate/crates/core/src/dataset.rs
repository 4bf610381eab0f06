//! Labeled and unlabeled sample sets, and their CSV form.
//!
//! CSV layout: UTF-8, `.` decimal separator, one sample per row, header row
//! `label,f0,...,f{d-1}` for labeled sets and `f0,...,f{d-1}` for unlabeled
//! ones. Floats are written in shortest round-trip form so a write/read cycle
//! is bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Features with a `±1` label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    features: Matrix,
    labels: Vec<f64>,
}

/// Features only.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    features: Matrix,
}

fn check_finite(features: &Matrix) -> Result<()> {
    match features.all_finite() {
        Some(row) => Err(Error::NonFinite {
            context: "feature row",
            index: row,
        }),
        None => Ok(()),
    }
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput(format!(
                "label {} at row {i} is not +1/-1",
                labels[i]
            )));
        }
        check_finite(&features)?;
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> (&[f64], f64) {
        (self.features.row(i), self.labels[i])
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn take(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            features: self.features.first_rows(k),
            labels: self.labels[..k].to_vec(),
        }
    }

    /// Drops the labels.
    pub fn to_unlabeled(&self) -> UnlabeledSet {
        UnlabeledSet {
            features: self.features.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let (x, y) = self.sample(i);
            let mut rec = Vec::with_capacity(x.len() + 1);
            rec.push(if y > 0.0 { "1".to_string() } else { "-1".to_string() });
            rec.extend(x.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(input: R, schema: &LabelSchema) -> Result<Self> {
        let (labels, features) = read_table(input, Some(schema))?;
        Self::new(features, labels.unwrap_or_default())
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &LabelSchema) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, schema)
    }
}

impl UnlabeledSet {
    pub fn new(features: Matrix) -> Result<Self> {
        check_finite(&features)?;
        Ok(Self { features })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
        }
    }

    pub fn take(&self, k: usize) -> Self {
        Self {
            features: self.features.first_rows(k),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.dim()).map(|j| format!("f{j}")))?;
        for x in self.features.iter_rows() {
            w.write_record(x.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads an unlabeled table. A leading `label` column, if present, is ignored.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (_, features) = read_table(input, None)?;
        Self::new(features)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Maps label strings found in a file to `±1`.
///
/// The default schema accepts numeric `1`, `+1`, `-1` (and `1.0`, `-1.0`).
/// Class-name schemas such as `{"tumor": 1, "normal": -1}` let embedding
/// exports with textual labels be ingested directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub classes: BTreeMap<String, i8>,
}

impl Default for LabelSchema {
    fn default() -> Self {
        let classes = [("1", 1), ("+1", 1), ("1.0", 1), ("-1", -1), ("-1.0", -1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self { classes }
    }
}

impl LabelSchema {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, i8)>,
        S: Into<String>,
    {
        let mut classes = BTreeMap::new();
        for (k, v) in pairs {
            if v != 1 && v != -1 {
                return Err(Error::Config(format!("class sign must be +1/-1, got {v}")));
            }
            classes.insert(k.into(), v);
        }
        Ok(Self { classes })
    }

    pub fn sign_of(&self, label: &str) -> Option<f64> {
        self.classes.get(label.trim()).map(|&s| f64::from(s))
    }
}

type Table = (Option<Vec<f64>>, Matrix);

fn read_table<R: Read>(input: R, schema: Option<&LabelSchema>) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let has_label = header.get(0).map(str::trim) == Some("label");
    if schema.is_some() && !has_label {
        return Err(Error::Csv {
            row: 1,
            message: "labeled file must start with a `label` column".into(),
        });
    }
    let offset = usize::from(has_label);
    let d = header.len() - offset;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in reader.records().enumerate() {
        // line 1 is the header
        let line = i + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Csv {
                row: line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        if let Some(schema) = schema {
            let raw = &rec[0];
            let y = schema.sign_of(raw).ok_or_else(|| Error::Csv {
                row: line,
                message: format!("unknown label `{raw}`"),
            })?;
            labels.push(y);
        }
        for field in rec.iter().skip(offset) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                row: line,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row: line,
                    message: "non-finite feature".into(),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let features = Matrix::from_row_major(rows, d, data)?;
    Ok((schema.map(|_| labels), features))
}
