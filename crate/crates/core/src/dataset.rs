//! Row-major datasets and their CSV form (header row `x1,...,xd`).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// `n` observations in ℝ^d stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dataset dimension must be >= 1".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        Ok(Dataset { dim, values })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Dataset::new(dim, Vec::new())
    }

    pub fn from_scalars(values: Vec<f64>) -> Self {
        Dataset { dim: 1, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| {
            Error::InvalidParameter("cannot infer dimension from zero rows".into())
        })?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::InvalidParameter(format!("row {} has {} columns, expected {dim}", i + 1, r.len())));
            }
            values.extend_from_slice(r);
        }
        Dataset::new(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinate-wise mean; `None` for an empty dataset.
    pub fn mean(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let n = self.len() as f64;
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        Some(m.into_iter().map(|s| s / n).collect())
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Dataset {
        Dataset { dim: self.dim, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(Error::Parse("missing header row".into()));
        }
        if header.iter().all(|h| h.parse::<f64>().is_ok()) {
            return Err(Error::Parse("header row required (first line is numeric)".into()));
        }
        let dim = header.len();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            if rec.len() != dim {
                return Err(Error::Parse(format!("row {row}: expected {dim} columns, found {}", rec.len())));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {row}: '{field}' is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("row {row}: non-finite value '{field}'")));
                }
                values.push(v);
            }
        }
        Dataset::new(dim, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.dim).map(|j| format!("x{j}")))?;
        for r in self.rows() {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Dataset::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 1e300]]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("x1,x2\n"));
        assert_eq!(Dataset::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn header_only_is_empty() {
        let d = Dataset::read_csv("x1\n".as_bytes()).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.dim(), 1);
    }

    #[test]
    fn missing_header_rejected() {
        assert!(matches!(Dataset::read_csv("1.0\n2.0\n".as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn bad_row_is_named() {
        let err = Dataset::read_csv("x\n1.0\nabc\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn mean_of_rows() {
        let d = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(d.mean().unwrap(), vec![2.0, 4.0]);
        assert_eq!(d.row(1), &[3.0, 6.0]);
    }
}
