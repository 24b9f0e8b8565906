//! Compressed sparse row storage for skinning weights and joint regressors.

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// explicit zeros dropped; entries within a row end up sorted by column.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidModel(format!(
                    "sparse entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Numeric(format!("sparse entry ({r}, {c}) = {v}")));
            }
            sorted.push((r, c, v));
        }
        sorted.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let triplets: Vec<_> = self.triplets().filter(|t| t.2 != 0.0).collect();
        let mut row_ptr = vec![0usize; self.rows + 1];
        for &(r, _, _) in &triplets {
            row_ptr[r + 1] += 1;
        }
        for r in 0..self.rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        self.row_ptr = row_ptr;
        self.col_idx = triplets.iter().map(|t| t.1).collect();
        self.values = triplets.iter().map(|t| t.2).collect();
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(cc, _)| *cc == c).map_or(0.0, |(_, v)| v)
    }

    /// `self · points` for a matrix acting on a list of 3-vectors.
    pub fn mul_points(&self, points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .fold(Vector3::zeros(), |acc, (c, v)| acc + points[c] * v)
            })
            .collect()
    }
}
