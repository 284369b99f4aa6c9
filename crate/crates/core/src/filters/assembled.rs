//! Filters pre-assembled over the union sparsity pattern of a bank.
//!
//! `H_{oc} = Σ_g a(g, c, o) T̂_g` is formed once per coefficient update, after
//! which a multi-channel application costs one pass over the pattern
//! instead of one per group element.

use rayon::prelude::*;

use super::FilterCoefficients;
use crate::error::{check_dim, Result};
use crate::shift_operators::OperatorBank;

/// Channel pairs handled per parallel task.
const PAIR_BLOCK: usize = 8;

/// Union pattern `P` of all operators in a bank, with every operator entry
/// listed under its pattern position.
#[derive(Clone, Debug)]
pub struct BankPattern {
    nodes: usize,
    elements: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// Entries of position `p` are `entry_ptr[p]..entry_ptr[p + 1]`.
    entry_ptr: Vec<usize>,
    entry_elem: Vec<u32>,
    entry_weight: Vec<f64>,
}

impl BankPattern {
    pub fn new(bank: &OperatorBank) -> Self {
        let n = bank.nodes();
        let e = bank.len();
        assert!(e <= u32::MAX as usize, "too many group elements");
        // union pattern, row by row
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut mark = vec![usize::MAX; n];
        let mut pos_of = vec![0usize; n];
        let mut counts: Vec<usize> = Vec::new();
        for i in 0..n {
            let start = col_idx.len();
            for op in bank.operators() {
                for &c in op.row(i).0 {
                    if mark[c] != i {
                        mark[c] = i;
                        col_idx.push(c);
                    }
                }
            }
            col_idx[start..].sort_unstable();
            row_ptr[i + 1] = col_idx.len();
        }
        counts.resize(col_idx.len(), 0);
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                pos_of[col_idx[p]] = p;
            }
            for op in bank.operators() {
                for &c in op.row(i).0 {
                    counts[pos_of[c]] += 1;
                }
            }
        }
        let mut entry_ptr = vec![0usize; col_idx.len() + 1];
        for (p, c) in counts.iter().enumerate() {
            entry_ptr[p + 1] = entry_ptr[p] + c;
        }
        let total = entry_ptr[col_idx.len()];
        let mut entry_elem = vec![0u32; total];
        let mut entry_weight = vec![0.0; total];
        let mut fill = entry_ptr.clone();
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                pos_of[col_idx[p]] = p;
            }
            // element order within a position is ascending, which fixes the
            // summation order
            for (g, op) in bank.operators().iter().enumerate() {
                let (cols, vals) = op.row(i);
                for (&c, &w) in cols.iter().zip(vals) {
                    let p = pos_of[c];
                    entry_elem[fill[p]] = g as u32;
                    entry_weight[fill[p]] = w;
                    fill[p] += 1;
                }
            }
        }
        Self {
            nodes: n,
            elements: e,
            row_ptr,
            col_idx,
            entry_ptr,
            entry_elem,
            entry_weight,
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    /// Size of the union pattern.
    pub fn len(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col_idx.is_empty()
    }

    /// Total operator entries across the bank.
    pub fn entries(&self) -> usize {
        self.entry_weight.len()
    }

    /// Forms `H` for every channel pair. Deterministic for any thread count.
    pub fn assemble(&self, coeffs: &FilterCoefficients) -> Result<AssembledFilter> {
        check_dim(self.elements, coeffs.elements())?;
        let pairs = coeffs.in_channels() * coeffs.out_channels();
        let a = coeffs.element_major();
        let plen = self.len();
        // h is pair-major: h[pair * plen + p]
        let mut h = vec![0.0; pairs * plen];
        if plen == 0 {
            return Ok(AssembledFilter {
                in_channels: coeffs.in_channels(),
                out_channels: coeffs.out_channels(),
                h,
            });
        }
        h.par_chunks_mut(PAIR_BLOCK * plen).enumerate().for_each(|(blk, chunk)| {
            let p0 = blk * PAIR_BLOCK;
            let np = chunk.len() / plen.max(1);
            let mut acc = [0.0f64; PAIR_BLOCK];
            for p in 0..plen {
                acc[..np].iter_mut().for_each(|v| *v = 0.0);
                for t in self.entry_ptr[p]..self.entry_ptr[p + 1] {
                    let g = self.entry_elem[t] as usize;
                    let w = self.entry_weight[t];
                    let row = &a[g * pairs + p0..g * pairs + p0 + np];
                    for (s, &x) in acc[..np].iter_mut().zip(row) {
                        *s += w * x;
                    }
                }
                for (q, &s) in acc[..np].iter().enumerate() {
                    chunk[q * plen + p] = s;
                }
            }
        });
        Ok(AssembledFilter {
            in_channels: coeffs.in_channels(),
            out_channels: coeffs.out_channels(),
            h,
        })
    }

    /// Pulls a pattern-space gradient `∂L/∂H` back to coefficients:
    /// `∂L/∂a(g, c, o) = Σ_{(p, w) ∈ T̂_g} w · ∂L/∂H_{oc}[p]`.
    pub fn coefficient_grad(&self, grad_h: &AssembledFilter) -> FilterCoefficients {
        let pairs = grad_h.in_channels * grad_h.out_channels;
        let plen = self.len();
        let e = self.elements;
        // element-major accumulation, one disjoint pair block per task
        let blocks: Vec<Vec<f64>> = (0..pairs.div_ceil(PAIR_BLOCK))
            .into_par_iter()
            .map(|blk| {
                let p0 = blk * PAIR_BLOCK;
                let np = PAIR_BLOCK.min(pairs - p0);
                let mut out = vec![0.0; e * np];
                let mut gh = [0.0f64; PAIR_BLOCK];
                for p in 0..plen {
                    for (q, v) in gh[..np].iter_mut().enumerate() {
                        *v = grad_h.h[(p0 + q) * plen + p];
                    }
                    if gh[..np].iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    for t in self.entry_ptr[p]..self.entry_ptr[p + 1] {
                        let g = self.entry_elem[t] as usize;
                        let w = self.entry_weight[t];
                        for (o, &v) in out[g * np..(g + 1) * np].iter_mut().zip(&gh[..np]) {
                            *o += w * v;
                        }
                    }
                }
                out
            })
            .collect();
        let mut values = vec![0.0; pairs * e];
        for (blk, out) in blocks.iter().enumerate() {
            let p0 = blk * PAIR_BLOCK;
            let np = out.len() / e.max(1);
            for g in 0..e {
                for q in 0..np {
                    values[(p0 + q) * e + g] = out[g * np + q];
                }
            }
        }
        FilterCoefficients::from_raw(e, grad_h.in_channels, grad_h.out_channels, values)
    }
}

/// `H_{oc}` over a [`BankPattern`], pair-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AssembledFilter {
    in_channels: usize,
    out_channels: usize,
    h: Vec<f64>,
}

impl AssembledFilter {
    pub fn zeros(pattern: &BankPattern, in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            h: vec![0.0; in_channels * out_channels * pattern.len()],
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn block(&self, pattern: &BankPattern, o: usize, c: usize) -> &[f64] {
        let plen = pattern.len();
        let pair = o * self.in_channels + c;
        &self.h[pair * plen..(pair + 1) * plen]
    }

    /// `out[o] = Σ_c H_{oc} f[c]`, channel-major slices of `nodes` values.
    pub fn apply(&self, pattern: &BankPattern, f: &[f64], out: &mut [f64]) {
        let n = pattern.nodes;
        debug_assert_eq!(f.len(), self.in_channels * n);
        debug_assert_eq!(out.len(), self.out_channels * n);
        out.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..self.out_channels {
            let dst = &mut out[o * n..(o + 1) * n];
            for c in 0..self.in_channels {
                let h = self.block(pattern, o, c);
                let src = &f[c * n..(c + 1) * n];
                for (i, d) in dst.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for p in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                        s += h[p] * src[pattern.col_idx[p]];
                    }
                    *d += s;
                }
            }
        }
    }

    /// Reverse pass of [`AssembledFilter::apply`]: accumulates
    /// `∂L/∂H_{oc}[p] += g[o][i] f[c][j]` into `grad_h` and writes
    /// `∂L/∂f[c] = Σ_o H_{oc}ᵀ g[o]` into `grad_f` when given.
    pub fn backward(
        &self,
        pattern: &BankPattern,
        f: &[f64],
        grad_out: &[f64],
        grad_h: &mut AssembledFilter,
        grad_f: Option<&mut [f64]>,
    ) {
        let n = pattern.nodes;
        let plen = pattern.len();
        for o in 0..self.out_channels {
            let g = &grad_out[o * n..(o + 1) * n];
            for c in 0..self.in_channels {
                let pair = o * self.in_channels + c;
                let gh = &mut grad_h.h[pair * plen..(pair + 1) * plen];
                let src = &f[c * n..(c + 1) * n];
                for (i, &gi) in g.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    for p in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                        gh[p] += gi * src[pattern.col_idx[p]];
                    }
                }
            }
        }
        if let Some(gf) = grad_f {
            gf.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..self.out_channels {
                let g = &grad_out[o * n..(o + 1) * n];
                for c in 0..self.in_channels {
                    let h = self.block(pattern, o, c);
                    let dst = &mut gf[c * n..(c + 1) * n];
                    for (i, &gi) in g.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        for p in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                            dst[pattern.col_idx[p]] += h[p] * gi;
                        }
                    }
                }
            }
        }
    }

    /// Elementwise sum, used to reduce per-sample gradients in a fixed order.
    pub fn add_assign(&mut self, other: &AssembledFilter) {
        for (a, b) in self.h.iter_mut().zip(&other.h) {
            *a += b;
        }
    }
}
