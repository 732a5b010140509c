//! Minimal dense matrix support for dimensions up to 5.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::Contract("matrix needs at least one row".into()));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) || c == 0 {
            return Err(Error::Contract("ragged matrix rows".into()));
        }
        Ok(Mat {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len(), entries.len());
        for (i, e) in entries.iter().enumerate() {
            m.set(i, i, *e);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Like `mul_vec` with integer coefficients.
    pub fn mul_ivec(&self, z: &[i64]) -> Vec<f64> {
        assert_eq!(z.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(z)
                    .map(|(a, b)| a * (*b as f64))
                    .sum()
            })
            .collect()
    }

    pub fn mul_mat(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.set(i, j, out.get(i, j) + a * other.get(k, j));
                }
            }
        }
        out
    }

    /// Scale row i by s.
    pub fn scale_rows(&self, scales: &[f64]) -> Mat {
        assert_eq!(scales.len(), self.rows);
        let mut out = self.clone();
        for (i, s) in scales.iter().enumerate() {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j) * s);
            }
        }
        out
    }

    /// Determinant and inverse by Gauss-Jordan with partial pivoting.
    pub fn det_inverse(&self) -> Result<(f64, Mat)> {
        if self.rows != self.cols {
            return Err(Error::Contract("inverse needs a square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        let mut det = 1.0f64;
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if a.get(r, col).abs() > a.get(pivot, col).abs() {
                    pivot = r;
                }
            }
            let p = a.get(pivot, col);
            if p.abs() < 1e-12 {
                return Err(Error::Conditioning(format!(
                    "near-singular matrix, pivot {p:.3e}"
                )));
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = a.get(col, j);
                    a.set(col, j, a.get(pivot, j));
                    a.set(pivot, j, tmp);
                    let tmp = inv.get(col, j);
                    inv.set(col, j, inv.get(pivot, j));
                    inv.set(pivot, j, tmp);
                }
                det = -det;
            }
            det *= a.get(col, col);
            let scale = 1.0 / a.get(col, col);
            for j in 0..n {
                a.set(col, j, a.get(col, j) * scale);
                inv.set(col, j, inv.get(col, j) * scale);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a.set(r, j, a.get(r, j) - f * a.get(col, j));
                    inv.set(r, j, inv.get(r, j) - f * inv.get(col, j));
                }
            }
        }
        Ok((det, inv))
    }

    pub fn det(&self) -> Result<f64> {
        Ok(self.det_inverse()?.0)
    }

    pub fn is_upper_triangular(&self) -> bool {
        for i in 0..self.rows {
            for j in 0..i.min(self.cols) {
                if self.get(i, j) != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_lower_triangular(&self) -> bool {
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                if self.get(i, j) != 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Rank of a set of row vectors, with a relative pivot tolerance.
pub fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let cols = m[0].len();
    let mut rank = 0;
    for col in 0..cols {
        let mut pivot = None;
        let mut best = 0.0;
        for (r, row) in m.iter().enumerate().skip(rank) {
            if row[col].abs() > best {
                best = row[col].abs();
                pivot = Some(r);
            }
        }
        let scale = m
            .iter()
            .skip(rank)
            .map(|r| sup_norm(r))
            .fold(0.0f64, f64::max);
        match pivot {
            Some(p) if best > tol * scale.max(1e-300) => {
                m.swap(rank, p);
                let (head, tail) = m.split_at_mut(rank + 1);
                let pivot_row = &head[rank];
                for row in tail.iter_mut() {
                    let f = row[col] / pivot_row[col];
                    for (x, pv) in row[col..cols].iter_mut().zip(&pivot_row[col..cols]) {
                        *x -= f * pv;
                    }
                }
                rank += 1;
                if rank == m.len() {
                    break;
                }
            }
            _ => continue,
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let m = Mat::from_rows(&[
            vec![2.0, 1.0, 0.5],
            vec![0.0, 1.0, -1.0],
            vec![1.0, 0.0, 3.0],
        ])
        .unwrap();
        let (det, inv) = m.det_inverse().unwrap();
        // cofactor expansion: 2(3-0) - 1(0+1) + 0.5(0-1) = 4.5
        assert!((det - 4.5).abs() < 1e-12);
        let prod = m.mul_mat(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_rejected() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(m.det_inverse().is_err());
    }

    #[test]
    fn rank_detects_dependence() {
        let rows = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
        ];
        assert_eq!(rank(&rows, 1e-9), 2);
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1e-3]];
        assert_eq!(rank(&rows, 1e-9), 2);
    }
}
