//! Group algebra filters `ρ̂(â) f = Σ_ĝ a(ĝ) T̂_ĝ f` and their diagnostics.

mod assembled;
mod diagnostics;

pub use assembled::{AssembledFilter, BankPattern};
pub use diagnostics::{
    coefficient_norm_bound, equivariance_residual, max_operator_norm, right_shift, stability_bound,
    stability_sweep, write_stability_csv, EquivarianceForm, EquivarianceReport, StabilityRow, NORM_ITERATIONS,
};

use std::io::{BufRead, Write};

use crate::error::{check_dim, invalid, Error, Result};
use crate::numerics::{parse_field, Rng};
use crate::shift_operators::OperatorBank;
use crate::signal_domain::DiscreteSignal;

/// One coefficient per (group element, input channel, output channel),
/// stored at `(o · in + c) · E + g`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterCoefficients {
    elements: usize,
    in_channels: usize,
    out_channels: usize,
    values: Vec<f64>,
}

impl FilterCoefficients {
    pub fn new(elements: usize, in_channels: usize, out_channels: usize, values: Vec<f64>) -> Result<Self> {
        if elements == 0 || in_channels == 0 || out_channels == 0 {
            return Err(invalid("filter shape must be nonzero"));
        }
        check_dim(elements * in_channels * out_channels, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("filter coefficients must be finite"));
        }
        Ok(Self::from_raw(elements, in_channels, out_channels, values))
    }

    pub(crate) fn from_raw(elements: usize, in_channels: usize, out_channels: usize, values: Vec<f64>) -> Self {
        Self {
            elements,
            in_channels,
            out_channels,
            values,
        }
    }

    pub fn zeros(elements: usize, in_channels: usize, out_channels: usize) -> Self {
        Self::from_raw(elements, in_channels, out_channels, vec![0.0; elements * in_channels * out_channels])
    }

    /// Single-channel filter from one coefficient per element.
    pub fn single(values: Vec<f64>) -> Result<Self> {
        Self::new(values.len(), 1, 1, values)
    }

    /// `a(identity) = 1` on matching channel pairs, zero elsewhere.
    pub fn identity(elements: usize, channels: usize, identity_index: usize) -> Self {
        let mut c = Self::zeros(elements, channels, channels);
        for ch in 0..channels {
            c.set(identity_index, ch, ch, 1.0);
        }
        c
    }

    /// iid uniform on `[-1/√(E·C_in), 1/√(E·C_in)]`.
    pub fn random_init(elements: usize, in_channels: usize, out_channels: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / ((elements * in_channels) as f64).sqrt();
        let values = (0..elements * in_channels * out_channels)
            .map(|_| rng.uniform_in(-bound, bound))
            .collect();
        Self::from_raw(elements, in_channels, out_channels, values)
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    fn offset(&self, g: usize, c: usize, o: usize) -> usize {
        (o * self.in_channels + c) * self.elements + g
    }

    pub fn get(&self, g: usize, c: usize, o: usize) -> f64 {
        self.values[self.offset(g, c, o)]
    }

    pub fn set(&mut self, g: usize, c: usize, o: usize, v: f64) {
        let i = self.offset(g, c, o);
        self.values[i] = v;
    }

    /// Coefficients of one channel pair, indexed by element.
    pub fn pair(&self, c: usize, o: usize) -> &[f64] {
        let start = self.offset(0, c, o);
        &self.values[start..start + self.elements]
    }

    /// Transposed copy laid out as `[g][o · in + c]`.
    pub(crate) fn element_major(&self) -> Vec<f64> {
        let pairs = self.in_channels * self.out_channels;
        let mut out = vec![0.0; self.values.len()];
        for pair in 0..pairs {
            for g in 0..self.elements {
                out[g * pairs + pair] = self.values[pair * self.elements + g];
            }
        }
        out
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_raw(
            self.elements,
            self.in_channels,
            self.out_channels,
            self.values.iter().map(|v| v * s).collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self::from_raw(
            self.elements,
            self.in_channels,
            self.out_channels,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if (self.elements, self.in_channels, self.out_channels)
            != (other.elements, other.in_channels, other.out_channels)
        {
            return Err(invalid("filter shapes differ"));
        }
        Ok(())
    }

    /// `COEFFS v1 elements in out` then one value per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "COEFFS v1 {} {} {}", self.elements, self.in_channels, self.out_channels)?;
        for v in &self.values {
            writeln!(w, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 5 || f[0] != "COEFFS" || f[1] != "v1" {
            return Err(Error::Parse(format!("bad coefficient header {header:?}")));
        }
        let (e, i, o) = (parse_field(f[2])?, parse_field(f[3])?, parse_field(f[4])?);
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() {
                values.push(parse_field(t)?);
            }
        }
        Self::new(e, i, o, values)
    }
}

fn check_apply(coeffs: &FilterCoefficients, bank: &OperatorBank, f: &DiscreteSignal) -> Result<()> {
    check_dim(bank.len(), coeffs.elements())?;
    check_dim(bank.nodes(), f.nodes())?;
    check_dim(coeffs.in_channels(), f.channels())
}

/// `out[o] = Σ_c Σ_g a(g, c, o) T̂_g f[c]`, one sparse product per term.
pub fn apply(coeffs: &FilterCoefficients, bank: &OperatorBank, f: &DiscreteSignal) -> Result<DiscreteSignal> {
    check_apply(coeffs, bank, f)?;
    let n = bank.nodes();
    let mut out = DiscreteSignal::zeros(n, coeffs.out_channels());
    let mut tmp = vec![0.0; n];
    for c in 0..coeffs.in_channels() {
        for (g, op) in bank.operators().iter().enumerate() {
            let weights: Vec<f64> = (0..coeffs.out_channels()).map(|o| coeffs.get(g, c, o)).collect();
            if weights.iter().all(|&w| w == 0.0) {
                continue;
            }
            op.spmv_into(f.channel(c), &mut tmp);
            for (o, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    for (d, t) in out.channel_mut(o).iter_mut().zip(&tmp) {
                        *d += w * t;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Same result as [`apply`] through a pre-assembled pattern.
pub fn apply_assembled(pattern: &BankPattern, filter: &AssembledFilter, f: &DiscreteSignal) -> Result<DiscreteSignal> {
    check_dim(pattern.nodes(), f.nodes())?;
    check_dim(filter.in_channels(), f.channels())?;
    let mut out = DiscreteSignal::zeros(pattern.nodes(), filter.out_channels());
    filter.apply(pattern, f.values(), out.values_mut());
    Ok(out)
}

#[cfg(test)]
mod tests;
