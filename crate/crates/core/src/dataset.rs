//! Per-agent datasets and their CSV representation.
//!
//! CSV layout: header `f0,...,f{d-1},label`, one sample per row. Values are
//! written in scientific notation with 17 significant digits so that a
//! save/load cycle reproduces every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    inputs: Arc<Matrix>,
    labels: Vector,
}

impl Dataset {
    pub fn new(id: impl Into<String>, inputs: Matrix, labels: Vector) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "Dataset (labels vs input rows)",
                expected: inputs.nrows(),
                found: labels.len(),
            });
        }
        if inputs.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite entries".into()));
        }
        Ok(Dataset {
            id: id.into(),
            inputs: Arc::new(inputs),
            labels,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub(crate) fn shared_inputs(&self) -> Arc<Matrix> {
        Arc::clone(&self.inputs)
    }

    pub fn labels(&self) -> &Vector {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Same inputs, different labels.
    pub fn with_labels(&self, labels: Vector) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "Dataset::with_labels",
                expected: self.len(),
                found: labels.len(),
            });
        }
        Ok(Dataset {
            id: self.id.clone(),
            inputs: Arc::clone(&self.inputs),
            labels,
        })
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, id: impl Into<String>, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidInput(format!(
                "row index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let d = self.dim();
        let inputs = Matrix::from_fn(indices.len(), d, |r, c| self.inputs[(indices[r], c)]);
        let labels = Vector::from_iterator(indices.len(), indices.iter().map(|&i| self.labels[i]));
        Dataset::new(id, inputs, labels)
    }

    /// Row-wise concatenation, in argument order.
    pub fn concat(id: impl Into<String>, parts: &[&Dataset]) -> Result<Self> {
        let d = parts.first().map_or(0, |p| p.dim());
        for p in parts {
            crate::error::check_dim("Dataset::concat (feature dimension)", d, p.dim())?;
        }
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut inputs = Matrix::zeros(n, d);
        let mut labels = Vector::zeros(n);
        let mut r = 0;
        for p in parts {
            inputs.view_mut((r, 0), (p.len(), d)).copy_from(p.inputs());
            labels.rows_mut(r, p.len()).copy_from(p.labels());
            r += p.len();
        }
        Dataset::new(id, inputs, labels)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim())
            .map(|j| format!("f{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut line = String::new();
            for j in 0..self.dim() {
                line.push_str(&format!("{:.16e},", self.inputs[(i, j)]));
            }
            line.push_str(&format!("{:.16e}", self.labels[i]));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse_csv(&id, &text).map_err(|e| match e {
            Error::Csv { reason, .. } => Error::Csv {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }

    pub fn parse_csv(id: &str, text: &str) -> Result<Self> {
        let fail = |reason: String| Error::Csv {
            path: id.to_string(),
            reason,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(fail("missing header".into()));
        }
        let d = header.len() - 1;
        for (j, name) in header.iter().enumerate() {
            let expected = if j == d { "label".to_string() } else { format!("f{j}") };
            if name != expected {
                return Err(fail(format!("header column {j} is `{name}`, expected `{expected}`")));
            }
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (r, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| fail(e.to_string()))?;
            for (j, cell) in rec.iter().enumerate() {
                if cell.is_empty() {
                    return Err(fail(format!("row {}: missing cell in column {j}", r + 1)));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| fail(format!("row {}: cannot parse `{cell}`", r + 1)))?;
                if j == d {
                    labels.push(v);
                } else {
                    values.push(v);
                }
            }
        }
        let n = labels.len();
        Dataset::new(id, Matrix::from_row_slice(n, d, &values), Vector::from_vec(labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let x = Matrix::from_row_slice(3, 2, &[0.1, 1.0 / 3.0, -2.5e-8, 7.0, 1e300, -0.0]);
        Dataset::new("a", x, Vector::from_vec(vec![std::f64::consts::PI, -1.0, 2.0 / 7.0])).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::parse_csv("a", std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.inputs(), ds.inputs());
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn ragged_row_rejected() {
        let err = Dataset::parse_csv("x", "f0,f1,label\n1,2,3\n1,2\n").unwrap_err();
        assert!(matches!(err, Error::Csv { .. }));
    }

    #[test]
    fn missing_cell_rejected() {
        assert!(Dataset::parse_csv("x", "f0,label\n1,\n").is_err());
    }

    #[test]
    fn header_mismatch_rejected() {
        let err = Dataset::parse_csv("x", "a,b,label\n1,2,3\n").unwrap_err();
        assert!(err.to_string().contains("expected `f0`"));
        assert!(Dataset::parse_csv("x", "f0,f1\n1,2\n").is_err());
        assert!(Dataset::parse_csv("x", "").is_err());
    }

    #[test]
    fn label_length_checked() {
        assert!(Dataset::new("x", Matrix::zeros(2, 1), Vector::zeros(3)).is_err());
        assert!(Dataset::new("x", Matrix::from_element(1, 1, f64::NAN), Vector::zeros(1)).is_err());
    }

    #[test]
    fn concat_and_subset() {
        let ds = sample();
        let both = Dataset::concat("ab", &[&ds, &ds]).unwrap();
        assert_eq!(both.len(), 6);
        let back = both.subset("b", &[3, 4, 5]).unwrap();
        assert_eq!(back.inputs(), ds.inputs());
        assert!(both.subset("bad", &[6]).is_err());
    }
}
