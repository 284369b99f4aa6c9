//! Row-compressed sparse matrices.
//!
//! Construction goes through coordinate triplets; duplicate `(row, col)`
//! pairs are coalesced by summation. The text format is
//!
//! ```text
//! SPARSEOP v1 <rows> <cols> <nnz>
//! <row> <col> <value>
//! ...
//! ```
//!
//! with values written in shortest round-trip form, so a reload is bit-exact.

use std::io::{BufRead, Write};

use crate::error::{check_dim, invalid, Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from coordinate triplets, summing duplicates.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= rows || c >= cols {
                return Err(invalid(format!("triplet ({r}, {c}) outside {rows}x{cols}")));
            }
            if !v.is_finite() {
                return Err(invalid(format!("non-finite value at ({r}, {c})")));
            }
        }
        // stable sort keeps insertion order for duplicate coordinates
        triplets.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("coalesce target") += v;
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
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != 0.0 {
                    triplets.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), triplets).expect("dense entries are in bounds")
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
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column indices and values of row `i`, columns ascending.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    /// Sparse matrix-vector product.
    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, v.len())?;
        let mut out = vec![0.0; self.rows];
        self.spmv_into(v, &mut out);
        Ok(out)
    }

    /// `out = self * v` without shape checks beyond debug assertions.
    pub fn spmv_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&c, &w)| w * v[c]).sum();
        }
    }

    /// `selfᵀ * v`.
    pub fn spmv_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &x) in v.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &w) in cols.iter().zip(vals) {
                out[c] += w * x;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let t = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, t).expect("transpose stays in bounds")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn scale(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let triplets = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.rows, self.cols, triplets)
    }

    /// Sparse-sparse product `self * other`.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        check_dim(self.cols, other.rows)?;
        let mut triplets = Vec::new();
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&j, &b) in ocols.iter().zip(ovals) {
                    triplets.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.rows, other.cols, triplets)
    }

    /// Left-multiplies by `diag(d)`, i.e. scales row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Result<SparseMatrix> {
        check_dim(self.rows, d.len())?;
        let mut out = self.clone();
        for (i, &s) in d.iter().enumerate() {
            let (a, b) = (out.row_ptr[i], out.row_ptr[i + 1]);
            out.values[a..b].iter_mut().for_each(|v| *v *= s);
        }
        Ok(out)
    }

    /// Largest absolute difference over the union of both sparsity patterns.
    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        match self.add(&other.scale(-1.0)) {
            Ok(d) => d.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    /// True when every row and every column has exactly one stored entry and
    /// that entry is within `tol` of one.
    pub fn is_permutation(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let mut col_seen = vec![false; self.cols];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let live: Vec<_> = cols.iter().zip(vals).filter(|(_, v)| **v != 0.0).collect();
            if live.len() != 1 || (live[0].1 - 1.0).abs() > tol || col_seen[*live[0].0] {
                return false;
            }
            col_seen[*live[0].0] = true;
        }
        true
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "SPARSEOP v1 {} {} {}", self.rows, self.cols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:?}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sparse operator file".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "SPARSEOP" || fields[1] != "v1" {
            return Err(Error::Parse(format!("bad sparse header: {header:?}")));
        }
        let rows = parse_field::<usize>(fields[2])?;
        let cols = parse_field::<usize>(fields[3])?;
        let nnz = parse_field::<usize>(fields[4])?;
        let mut triplets = Vec::with_capacity(nnz);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad sparse entry: {line:?}")));
            };
            triplets.push((parse_field(r)?, parse_field(c)?, parse_field(v)?));
        }
        if triplets.len() != nnz {
            return Err(Error::Parse(format!(
                "header announces {nnz} entries, found {}",
                triplets.len()
            )));
        }
        let m = Self::from_triplets(rows, cols, triplets)?;
        if m.nnz() != nnz {
            return Err(Error::Parse("duplicate coordinates in sparse file".into()));
        }
        Ok(m)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}

/// Power-iteration estimate of the spectral norm: runs `iterations` steps on
/// `sᵀs` from a fixed start vector and returns `‖s x‖` for the final unit
/// iterate. The sequence of estimates is nondecreasing in `iterations`.
pub fn operator_norm_estimate(s: &SparseMatrix, iterations: usize) -> Result<f64> {
    if !s.is_square() {
        return Err(invalid(format!(
            "norm estimate needs a square matrix, got {}x{}",
            s.rows, s.cols
        )));
    }
    if iterations == 0 {
        return Err(invalid("norm estimate needs at least one iteration"));
    }
    let n = s.cols;
    if n == 0 {
        return Ok(0.0);
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iterations {
        s.spmv_into(&x, &mut y);
        estimate = norm2(&y);
        if estimate == 0.0 {
            return Ok(0.0);
        }
        let mut z = s.spmv_transpose(&y)?;
        if normalize(&mut z) == 0.0 {
            break;
        }
        x = z;
    }
    Ok(estimate)
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
    n
}
