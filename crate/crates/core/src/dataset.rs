//! Paired samples `(x_i, y_i)` and their CSV representation.
//!
//! The CSV layout is a header row `x1,...,xp,y1,...,yK,outlier` followed by
//! one row per sample. Floats are written in shortest round-trip form and
//! `outlier` is `0` or `1`.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether responses are real vectors or one-hot class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// `N` samples with covariates `x` (`N×p`), responses `y` (`N×K`) and a
/// per-sample outlier flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array2<f64>,
    outliers: Vec<bool>,
    true_b: Option<Array2<f64>>,
    task: Task,
}

fn is_one_hot(row: ArrayView1<'_, f64>) -> bool {
    row.iter().all(|&v| v == 0.0 || v == 1.0) && row.iter().filter(|&&v| v == 1.0).count() == 1
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>, outliers: Vec<bool>, task: Task) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::shape("dataset needs at least one sample, covariate and response"));
        }
        if x.nrows() != y.nrows() || outliers.len() != x.nrows() {
            return Err(Error::shape(format!(
                "row counts differ: x has {}, y has {}, mask has {}",
                x.nrows(),
                y.nrows(),
                outliers.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("dataset has a non-finite value"));
        }
        if task == Task::Classification {
            if let Some(i) = y.axis_iter(Axis(0)).position(|row| !is_one_hot(row)) {
                return Err(Error::domain(format!("row {i} of y is not one-hot")));
            }
        }
        Ok(Dataset {
            x,
            y,
            outliers,
            true_b: None,
            task,
        })
    }

    /// Regression dataset with no outliers flagged.
    pub fn regression(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        let n = x.nrows();
        Dataset::new(x, y, vec![false; n], Task::Regression)
    }

    /// Classification dataset from integer labels in `0..k`.
    pub fn classification(x: Array2<f64>, labels: &[usize], k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::domain(format!("label {bad} out of range for {k} classes")));
        }
        let y = one_hot(labels, k);
        let n = x.nrows();
        Dataset::new(x, y, vec![false; n], Task::Classification)
    }

    pub fn with_truth(mut self, b: Array2<f64>) -> Result<Self> {
        if b.nrows() != self.p() || b.ncols() != self.k() {
            return Err(Error::shape("ground-truth matrix must be p x K"));
        }
        self.true_b = Some(b);
        Ok(self)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn outliers(&self) -> &[bool] {
        &self.outliers
    }

    pub fn true_b(&self) -> Option<&Array2<f64>> {
        self.true_b.as_ref()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.y.ncols()
    }

    pub fn outlier_count(&self) -> usize {
        self.outliers.iter().filter(|&&o| o).count()
    }

    /// Class index of each row; only meaningful for classification data.
    pub fn labels(&self) -> Vec<usize> {
        self.y
            .axis_iter(Axis(0))
            .map(|row| row.iter().position(|&v| v == 1.0).unwrap_or(0))
            .collect()
    }

    /// Sub-dataset of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            outliers: rows.iter().map(|&i| self.outliers[i]).collect(),
            true_b: self.true_b.clone(),
            task: self.task,
        }
    }

    /// The same samples sorted by the bit patterns of `(x, y)`.
    ///
    /// Full-batch objectives are summed in this order so results do not
    /// depend on how the caller happened to order the rows.
    pub fn canonical(&self) -> Dataset {
        let key = |i: usize| -> Vec<u64> {
            self.x
                .row(i)
                .iter()
                .chain(self.y.row(i).iter())
                .map(|v| v.to_bits())
                .collect()
        };
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by_cached_key(|&i| key(i));
        self.select(&order)
    }

    /// Copy with a trailing column of ones appended to `x`.
    pub fn with_intercept_column(&self) -> Dataset {
        let mut x = Array2::ones((self.n(), self.p() + 1));
        x.slice_mut(ndarray::s![.., ..self.p()]).assign(&self.x);
        Dataset {
            x,
            y: self.y.clone(),
            outliers: self.outliers.clone(),
            true_b: None,
            task: self.task,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
        header.extend((1..=self.k()).map(|j| format!("y{j}")));
        header.push("outlier".into());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.y.row(i).iter())
                .map(|v| format!("{v:?}"))
                .collect();
            rec.push(if self.outliers[i] { "1" } else { "0" }.into());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, task: Task) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let p = cols.iter().take_while(|c| c.starts_with('x')).count();
        let k = cols[p..].iter().take_while(|c| c.starts_with('y')).count();
        let expected_x = (1..=p).map(|j| format!("x{j}"));
        let expected_y = (1..=k).map(|j| format!("y{j}"));
        let expected: Vec<String> = expected_x
            .chain(expected_y)
            .chain(std::iter::once("outlier".to_string()))
            .collect();
        if p == 0 || k == 0 || cols.len() != expected.len() || cols.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::parse(
                Some(1),
                format!("header must be x1..xp,y1..yK,outlier; got {:?}", cols.join(",")),
            ));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut mask = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|pos| pos.line());
            if rec.len() != expected.len() {
                return Err(Error::parse(
                    line,
                    format!("expected {} fields, found {}", expected.len(), rec.len()),
                ));
            }
            for (j, field) in rec.iter().enumerate().take(p + k) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(line, format!("column {}: not a number: {field:?}", expected[j])))?;
                if j < p {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
            mask.push(match rec[p + k].trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(line, format!("column outlier: expected 0 or 1, got {other:?}"))),
            });
        }
        let n = mask.len();
        if n == 0 {
            return Err(Error::parse(None, "dataset has no rows"));
        }
        let x = Array2::from_shape_vec((n, p), xs).expect("row-major buffer matches shape");
        let y = Array2::from_shape_vec((n, k), ys).expect("row-major buffer matches shape");
        Dataset::new(x, y, mask, task)
    }
}

/// One-hot encoding of class labels.
pub fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        y[[i, l]] = 1.0;
    }
    y
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    Error::parse(line, e.to_string())
}
