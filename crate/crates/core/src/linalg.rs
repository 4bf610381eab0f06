//! Small dense helpers shared across the crate.
//!
//! Sample matrices are stored row-major so that per-sample access is a
//! contiguous slice; anything needing factorizations goes through `nalgebra`.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Returns `v / |v|`, or `Error::ZeroTheta` for the zero vector.
pub fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroTheta);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Unit-norm check used by every closed-form evaluator.
pub fn require_unit(theta: &[f64]) -> Result<()> {
    let n = norm(theta);
    if n == 0.0 {
        return Err(Error::ZeroTheta);
    }
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitTheta { norm: n });
    }
    Ok(())
}

/// Row-major `rows x cols` matrix of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            data,
            rows: rows.len(),
            cols,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            rows: idx.len(),
            cols: self.cols,
        }
    }

    pub fn first_rows(&self, k: usize) -> Self {
        let k = k.min(self.rows);
        Self {
            data: self.data[..k * self.cols].to_vec(),
            rows: k,
            cols: self.cols,
        }
    }

    /// `(1/rows) * X^T X` as an `nalgebra` matrix.
    pub fn second_moment(&self) -> nalgebra::DMatrix<f64> {
        let d = self.cols;
        let mut m = nalgebra::DMatrix::<f64>::zeros(d, d);
        for r in self.iter_rows() {
            for i in 0..d {
                let ri = r[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..d {
                    m[(i, j)] += ri * r[j];
                }
            }
        }
        let scale = 1.0 / self.rows.max(1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = m[(i, j)] * scale;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn all_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| p / self.cols.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_selection() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.row(1), &[1.0, 2.0]);
        assert_eq!(m.iter_rows().count(), 3);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn second_moment_matches_hand_computation() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 2.0]]).unwrap();
        let s = m.second_moment();
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(0, 1)], -1.0);
        assert_eq!(s[(1, 0)], -1.0);
        assert_eq!(s[(1, 1)], 2.0);
    }

    #[test]
    fn unit_check() {
        assert!(require_unit(&[0.6, 0.8]).is_ok());
        assert!(matches!(require_unit(&[0.0, 0.0]), Err(Error::ZeroTheta)));
        assert!(matches!(
            require_unit(&[1.0, 1.0]),
            Err(Error::NonUnitTheta { .. })
        ));
    }
}
