//! Dense 2-D tensors of 64-bit floats.
//!
//! Everything in the crate is desk-scale, so a tensor is a row-major
//! `Vec<f64>` with a `(rows, cols)` shape. Scalars are `1 x 1`, column
//! vectors `n x 1`. Reductions that pool over nodes or neighbors sum their
//! summands in ascending value order, which makes them exactly invariant
//! under node relabeling instead of merely invariant up to rounding.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRecord", into = "TensorRecord")]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Checkpoint wire format: `{"shape": [rows, cols], "data": [...]}`.
#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl TryFrom<TensorRecord> for Tensor {
    type Error = String;

    fn try_from(record: TensorRecord) -> Result<Self, String> {
        let [rows, cols] = record.shape;
        if record.data.len() != rows * cols {
            return Err(format!(
                "tensor data length {} does not match shape {rows}x{cols}",
                record.data.len()
            ));
        }
        Ok(Self {
            rows,
            cols,
            data: record.data,
        })
    }
}

impl From<Tensor> for TensorRecord {
    fn from(t: Tensor) -> Self {
        Self {
            shape: [t.rows, t.cols],
            data: t.data,
        }
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows_data: &[Vec<f64>]) -> Self {
        let rows = rows_data.len();
        let cols = rows_data.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for row in rows_data {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows, cols, data }
    }

    /// Column vector `n x 1`.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Row vector `1 x n`.
    pub fn row(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_shape(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() requires a 1x1 tensor");
        self.data[0]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Sum in ascending value order (total order over f64 bits), so the result
/// does not depend on the order the summands were produced in.
pub fn stable_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}
