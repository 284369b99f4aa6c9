//! Small dense matrices and the matrix exponential.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{check_dim, invalid, Result};

/// Largest dimension accepted by [`mat_exp`].
pub const MAX_EXP_DIM: usize = 8;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.cols, other.rows)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, v.len())?;
        Ok(self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.add(&other.scale(-1.0))
    }

    /// Largest absolute entry-wise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_skew_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..self.cols).all(|j| (self[(i, j)] + self[(j, i)]).abs() <= tol))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols.max(1)) {
            writeln!(f, "  {:?}", row)?;
        }
        write!(f, "]")
    }
}

/// Computes `exp(t * m)`.
///
/// Skew-symmetric 2x2 and 3x3 inputs use the closed-form rotation and the
/// Rodrigues formula respectively. Everything else goes through scaling and
/// squaring around a degree-18 Taylor core, with the scaled matrix brought
/// to 1-norm at most 1/2 (truncation error below 1e-22 before squaring).
pub fn mat_exp(m: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(invalid(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if m.rows > MAX_EXP_DIM {
        return Err(invalid(format!(
            "matrix exponential supports dimension <= {MAX_EXP_DIM}, got {}",
            m.rows
        )));
    }
    if !t.is_finite() || m.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix exponential input must be finite"));
    }

    let skew = m.is_skew_symmetric(0.0) && (0..m.rows).all(|i| m[(i, i)] == 0.0);
    match m.rows {
        2 if skew => Ok(rotation_2d(t * m[(1, 0)])),
        3 if skew => Ok(rodrigues(t * m[(2, 1)], t * m[(0, 2)], t * m[(1, 0)])),
        _ => Ok(taylor_scaled(&m.scale(t))),
    }
}

/// `[[cos a, -sin a], [sin a, cos a]]`.
pub fn rotation_2d(angle: f64) -> DenseMatrix {
    let (s, c) = angle.sin_cos();
    DenseMatrix {
        rows: 2,
        cols: 2,
        data: vec![c, -s, s, c],
    }
}

/// Rotation `exp([w]x)` for the axis-angle vector `w = (wx, wy, wz)`.
pub fn rodrigues(wx: f64, wy: f64, wz: f64) -> DenseMatrix {
    let theta2 = wx * wx + wy * wy + wz * wz;
    if theta2 == 0.0 {
        return DenseMatrix::identity(3);
    }
    let theta = theta2.sqrt();
    // sin(x)/x and (1 - cos x)/x^2, series near zero
    let (a, b) = if theta < 1e-4 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = [0.0, -wz, wy, wz, 0.0, -wx, -wy, wx, 0.0];
    let mut data = vec![0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            let k2: f64 = (0..3).map(|l| k[i * 3 + l] * k[l * 3 + j]).sum();
            data[i * 3 + j] = if i == j { 1.0 } else { 0.0 } + a * k[i * 3 + j] + b * k2;
        }
    }
    DenseMatrix { rows: 3, cols: 3, data }
}

const TAYLOR_DEGREE: usize = 18;

fn taylor_scaled(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows;
    let norm = a.norm_1();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a.scale(0.5f64.powi(squarings as i32));

    let mut result = DenseMatrix::identity(n);
    let mut term = DenseMatrix::identity(n);
    for k in 1..=TAYLOR_DEGREE {
        term = term.mul_unchecked(&scaled).scale(1.0 / k as f64);
        if term.data.iter().all(|v| *v == 0.0) {
            break;
        }
        result = result.add(&term).expect("same shape");
    }
    for _ in 0..squarings {
        result = result.mul_unchecked(&result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn taylor_oracle(m: &DenseMatrix, t: f64, terms: usize) -> DenseMatrix {
        let a = m.scale(t);
        let mut sum = DenseMatrix::identity(m.rows());
        let mut term = DenseMatrix::identity(m.rows());
        for k in 1..terms {
            term = term.matmul(&a).unwrap().scale(1.0 / k as f64);
            sum = sum.add(&term).unwrap();
        }
        sum
    }

    fn gen_z() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[0.0, -1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn quarter_turn() {
        let x = DenseMatrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).unwrap();
        let r = mat_exp(&x, FRAC_PI_2).unwrap();
        let expected = DenseMatrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).unwrap();
        assert!(r.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn zero_time_is_identity() {
        let general = DenseMatrix::from_rows(&[&[0.3, 1.2, -0.4], &[2.0, -1.0, 0.5], &[0.1, 0.0, 0.7]]).unwrap();
        for m in [gen_z(), general, DenseMatrix::identity(5)] {
            let e = mat_exp(&m, 0.0).unwrap();
            assert_eq!(e, DenseMatrix::identity(m.rows()));
        }
    }

    #[test]
    fn rodrigues_matches_taylor_oracle() {
        let r = mat_exp(&gen_z(), 0.37).unwrap();
        let oracle = taylor_oracle(&gen_z(), 0.37, 30);
        assert!(r.max_abs_diff(&oracle) < 1e-12);

        let g = DenseMatrix::from_rows(&[&[0.0, -0.3, 0.8], &[0.3, 0.0, -0.5], &[-0.8, 0.5, 0.0]]).unwrap();
        let r = mat_exp(&g, 1.7).unwrap();
        let oracle = taylor_oracle(&g, 1.7, 40);
        assert!(r.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn general_path_matches_oracle() {
        let m = DenseMatrix::from_rows(&[
            &[0.3, 1.2, -0.4, 0.0],
            &[2.0, -1.0, 0.5, 0.2],
            &[0.1, 0.0, 0.7, -0.3],
            &[0.0, 0.4, 0.0, 0.1],
        ])
        .unwrap();
        let e = mat_exp(&m, 1.3).unwrap();
        let oracle = taylor_oracle(&m, 1.3, 60);
        let rel = e.max_abs_diff(&oracle) / oracle.frobenius_norm();
        assert!(rel < 1e-13, "rel {rel}");
    }

    #[test]
    fn nilpotent_translation_is_exact() {
        let mut g = DenseMatrix::zeros(3, 3);
        g[(0, 2)] = 1.0;
        let e = mat_exp(&g, 3.0).unwrap();
        let mut expected = DenseMatrix::identity(3);
        expected[(0, 2)] = 3.0;
        assert_eq!(e, expected);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(mat_exp(&DenseMatrix::zeros(2, 3), 1.0).is_err());
        assert!(mat_exp(&DenseMatrix::identity(9), 1.0).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(mat_exp(&DenseMatrix::identity(2), f64::INFINITY).is_err());
    }

    #[test]
    fn one_parameter_subgroup_and_orthogonality() {
        let g = DenseMatrix::from_rows(&[&[0.0, -0.6, 0.2], &[0.6, 0.0, -0.9], &[-0.2, 0.9, 0.0]]).unwrap();
        for &(s, t) in &[(0.1, 0.2), (1.5, -0.7), (2.9, 3.3)] {
            let lhs = mat_exp(&g, s).unwrap().matmul(&mat_exp(&g, t).unwrap()).unwrap();
            let rhs = mat_exp(&g, s + t).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-10);
            let r = mat_exp(&g, s).unwrap();
            let rtr = r.transpose().matmul(&r).unwrap();
            assert!(rtr.max_abs_diff(&DenseMatrix::identity(3)) < 1e-10);
        }
    }
}
