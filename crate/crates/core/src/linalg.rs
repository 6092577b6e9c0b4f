//! Minimal dense complex linear algebra: row-major matrices and LU with
//! partial pivoting. Block sizes in this crate stay in the low thousands,
//! so a straightforward implementation is plenty.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v.iter())
                    .fold(ZERO, |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Extracts the submatrix with the given row and column index sets.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> CMat {
        CMat::from_fn(row_idx.len(), col_idx.len(), |i, j| self[(row_idx[i], col_idx[j])])
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: CMat,
    perm: Vec<usize>,
    sign: f64,
    min_pivot: f64,
    max_pivot: f64,
}

impl Lu {
    pub fn factor(mut a: CMat) -> Result<Lu> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "LU needs a square matrix");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot: f64 = 0.0;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            // Pivot search in column k.
            let mut best = k;
            let mut best_mag = a[(k, k)].norm();
            for i in (k + 1)..n {
                let m = a[(i, k)].norm();
                if m > best_mag {
                    best = i;
                    best_mag = m;
                }
            }
            if best_mag < 1e-14 * scale {
                return Err(Error::Conditioning(format!(
                    "LU pivot {best_mag:.3e} below 1e-14 of matrix scale {scale:.3e} at step {k}"
                )));
            }
            if best != k {
                perm.swap(k, best);
                sign = -sign;
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(best, j)];
                    a[(best, j)] = tmp;
                }
            }
            let piv = a[(k, k)];
            min_pivot = min_pivot.min(best_mag);
            max_pivot = max_pivot.max(best_mag);
            let inv_piv = ONE / piv;
            for i in (k + 1)..n {
                let factor = a[(i, k)] * inv_piv;
                a[(i, k)] = factor;
                if factor != ZERO {
                    for j in (k + 1)..n {
                        let v = a[(k, j)];
                        a[(i, j)] -= factor * v;
                    }
                }
            }
        }
        if n == 0 {
            min_pivot = 0.0;
        }
        Ok(Lu { lu: a, perm, sign, min_pivot, max_pivot })
    }

    /// Crude conditioning indicator: smallest over largest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        if self.max_pivot == 0.0 {
            0.0
        } else {
            self.min_pivot / self.max_pivot
        }
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        // Forward substitution (unit lower triangle).
        for i in 1..n {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for (j, xv) in x.iter().enumerate().take(i) {
                acc -= row[j] * xv;
            }
            x[i] = acc;
        }
        // Backward substitution.
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for (j, xv) in x.iter().enumerate().skip(i + 1) {
                acc -= row[j] * xv;
            }
            x[i] = acc / row[i];
        }
        x
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        let n = self.lu.rows();
        assert_eq!(b.rows(), n);
        let mut out = CMat::zeros(n, b.cols());
        let mut col = vec![ZERO; n];
        for j in 0..b.cols() {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let x = self.solve_vec(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> CMat {
        self.solve_mat(&CMat::identity(self.lu.rows()))
    }

    pub fn det(&self) -> Complex64 {
        let mut d = Complex64::new(self.sign, 0.0);
        for i in 0..self.lu.rows() {
            d *= self.lu[(i, i)];
        }
        d
    }
}

/// Determinant of a small matrix via LU; zero pivots mean a zero determinant.
pub fn det(a: &CMat) -> Complex64 {
    match Lu::factor(a.clone()) {
        Ok(lu) => lu.det(),
        Err(_) => ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solve_known_system() {
        // [[2, 1], [1, 3]] x = [5, 10] -> x = [1, 3].
        let a = CMat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(2.0, 0.0),
            (0, 1) => c(1.0, 0.0),
            (1, 0) => c(1.0, 0.0),
            _ => c(3.0, 0.0),
        });
        let lu = Lu::factor(a).unwrap();
        let x = lu.solve_vec(&[c(5.0, 0.0), c(10.0, 0.0)]);
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((x[1] - c(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn inverse_of_random_complex_matrix() {
        // Deterministic pseudo-random entries.
        let n = 12;
        let mut seed = 0x243f6a8885a308d3u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = CMat::from_fn(n, n, |i, j| {
            let mut v = c(next(), next());
            if i == j {
                v += c(4.0, 0.0); // keep it comfortably nonsingular
            }
            v
        });
        let inv = Lu::factor(a.clone()).unwrap().inverse();
        let prod = a.matmul(&inv);
        let dev = prod.sub(&CMat::identity(n)).max_abs();
        assert!(dev < 1e-12, "A A^-1 deviates from I by {dev:.3e}");
    }

    #[test]
    fn determinant_matches_cofactor_expansion() {
        let a = CMat::from_fn(3, 3, |i, j| c((i * 3 + j) as f64 + 1.0, 0.0));
        // Singular (rows are arithmetic progressions).
        assert!(det(&a).norm() < 1e-12);
        let b = CMat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(1.0, 1.0),
            (0, 1) => c(2.0, 0.0),
            (1, 0) => c(0.0, 1.0),
            _ => c(1.0, -1.0),
        });
        // det = (1+i)(1-i) - 2i = 2 - 2i.
        assert!((det(&b) - c(2.0, -2.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_matrix_reports_conditioning() {
        let a = CMat::from_fn(2, 2, |_, _| c(1.0, 0.0));
        assert!(matches!(Lu::factor(a), Err(Error::Conditioning(_))));
    }
}
