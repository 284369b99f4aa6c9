use std::io::Write;

use rayon::prelude::*;

use super::{apply, FilterCoefficients};
use crate::error::{check_dim, invalid, Result};
use crate::lie_groups::SamplingSet;
use crate::numerics::{operator_norm_estimate, Rng, SparseMatrix};
use crate::shift_operators::{OperatorBank, PerturbMode};
use crate::signal_domain::DiscreteSignal;

/// Power-iteration steps used for operator norms.
pub const NORM_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquivarianceForm {
    /// `‖ρ̂(â) T̂_h f − T̂_h ρ̂(â) f‖`
    Commutative,
    /// `‖ρ̂(â) T̂_h f − ρ̂(R_{h⁻¹} â) f‖`
    RightShift,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivarianceReport {
    pub residual: f64,
    /// Coefficients whose shifted element fell outside the sampled set.
    pub dropped: usize,
    /// Set when some bank operator is not an exact permutation.
    pub approximate: bool,
}

fn shift_signal(op: &SparseMatrix, f: &DiscreteSignal) -> DiscreteSignal {
    let mut out = DiscreteSignal::zeros(f.nodes(), f.channels());
    for c in 0..f.channels() {
        op.spmv_into(f.channel(c), out.channel_mut(c));
    }
    out
}

fn distance(a: &DiscreteSignal, b: &DiscreteSignal) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `(R_{h⁻¹} a)(g h) = a(g)` on the sampled set, with the number of nonzero
/// coefficients whose `g h` is not in the set.
pub fn right_shift(coeffs: &FilterCoefficients, set: &SamplingSet, h_index: usize) -> Result<(FilterCoefficients, usize)> {
    check_dim(set.len(), coeffs.elements())?;
    let h = set
        .elements()
        .get(h_index)
        .ok_or_else(|| invalid(format!("element index {h_index} out of range")))?;
    let target: Vec<Option<usize>> = set
        .elements()
        .iter()
        .map(|g| g.matmul(h).ok().and_then(|gh| set.find(&gh)))
        .collect();
    let mut out = FilterCoefficients::zeros(coeffs.elements(), coeffs.in_channels(), coeffs.out_channels());
    let mut dropped = 0;
    for o in 0..coeffs.out_channels() {
        for c in 0..coeffs.in_channels() {
            for (g, t) in target.iter().enumerate() {
                let a = coeffs.get(g, c, o);
                match t {
                    Some(j) => out.set(*j, c, o, out.get(*j, c, o) + a),
                    None if a != 0.0 => dropped += 1,
                    None => {}
                }
            }
        }
    }
    Ok((out, dropped))
}

pub fn equivariance_residual(
    coeffs: &FilterCoefficients,
    bank: &OperatorBank,
    h_index: usize,
    f: &DiscreteSignal,
    form: EquivarianceForm,
) -> Result<EquivarianceReport> {
    if h_index >= bank.len() {
        return Err(invalid(format!("element index {h_index} out of range for {} elements", bank.len())));
    }
    let th = bank.operator(h_index);
    let lhs = apply(coeffs, bank, &shift_signal(th, f))?;
    let (rhs, dropped) = match form {
        EquivarianceForm::Commutative => (shift_signal(th, &apply(coeffs, bank, f)?), 0),
        EquivarianceForm::RightShift => {
            let (shifted, dropped) = right_shift(coeffs, bank.set(), h_index)?;
            (apply(&shifted, bank, f)?, dropped)
        }
    };
    let approximate = !bank.operators().par_iter().all(|op| op.is_permutation(1e-12));
    Ok(EquivarianceReport {
        residual: distance(&lhs, &rhs),
        dropped,
        approximate,
    })
}

/// Largest power-iteration norm estimate over the bank.
pub fn max_operator_norm(bank: &OperatorBank) -> Result<f64> {
    let norms = bank
        .operators()
        .par_iter()
        .map(|op| operator_norm_estimate(op, NORM_ITERATIONS))
        .collect::<Result<Vec<_>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// `(‖ρ̂(a) − ρ̂(b)‖, Σ|a − b| · max ‖T̂_ĝ‖)`; the first never exceeds the
/// second by the triangle inequality. Multi-channel filters are treated as
/// block operators.
pub fn coefficient_norm_bound(a: &FilterCoefficients, b: &FilterCoefficients, bank: &OperatorBank) -> Result<(f64, f64)> {
    let d = a.sub(b)?;
    check_dim(bank.len(), d.elements())?;
    let n = bank.nodes();
    let mut trips = Vec::new();
    for o in 0..d.out_channels() {
        for c in 0..d.in_channels() {
            for (g, &w) in d.pair(c, o).iter().enumerate() {
                if w != 0.0 {
                    trips.extend(bank.operator(g).triplets().map(|(r, col, v)| (o * n + r, c * n + col, w * v)));
                }
            }
        }
    }
    // zero-padded to square; padding does not change the norm
    let size = n * d.in_channels().max(d.out_channels());
    let m = SparseMatrix::from_triplets(size, size, trips)?;
    let lhs = operator_norm_estimate(&m, NORM_ITERATIONS)?;
    let l1 = d.l1_norm();
    let rhs = if l1 == 0.0 { 0.0 } else { l1 * max_operator_norm(bank)? };
    Ok((lhs, rhs))
}

/// `(Σ|a|) · ε · ‖f‖ · (1 + max ‖T̂‖)`.
pub fn stability_bound(coeffs: &FilterCoefficients, epsilon: f64, signal_norm: f64, max_op_norm: f64) -> f64 {
    coeffs.l1_norm() * epsilon * signal_norm * (1.0 + max_op_norm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub epsilon: f64,
    pub median_dev: f64,
    pub max_dev: f64,
    pub seed: u64,
    /// `‖ρ̂(â) f − ρ̂_Q(â) f‖` per evaluation signal.
    pub deviations: Vec<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Output deviation under operator perturbations of each size in `epsilons`.
///
/// Size `i` perturbs operator `g` with the draws of `rng.fork(i).fork(g)`, so
/// rows match [`crate::shift_operators::perturb_bank`] with `rng.fork(i)`.
/// The deviation is formed directly from the perturbation terms rather than
/// by differencing two filter outputs.
pub fn stability_sweep(
    coeffs: &FilterCoefficients,
    bank: &OperatorBank,
    epsilons: &[f64],
    mode: PerturbMode,
    rng: &Rng,
    signals: &[DiscreteSignal],
) -> Result<Vec<StabilityRow>> {
    if epsilons.is_empty() {
        return Err(invalid("stability sweep needs at least one epsilon"));
    }
    if signals.is_empty() {
        return Err(invalid("stability sweep needs at least one signal"));
    }
    if epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(invalid("epsilons must be nonnegative"));
    }
    check_dim(bank.len(), coeffs.elements())?;
    for f in signals {
        check_dim(bank.nodes(), f.nodes())?;
        check_dim(coeffs.in_channels(), f.channels())?;
    }
    let n = bank.nodes();
    let (cin, cout, e) = (coeffs.in_channels(), coeffs.out_channels(), bank.len());
    epsilons
        .par_iter()
        .enumerate()
        .map(|(idx, &eps)| {
            let mut deviations = vec![0.0; signals.len()];
            if eps > 0.0 {
                let base = rng.fork(idx as u64);
                let q: Vec<Vec<f64>> = (0..e)
                    .map(|g| {
                        let mut r = base.fork(g as u64);
                        (0..n).map(|_| r.uniform_in(-eps, eps)).collect()
                    })
                    .collect();
                match mode {
                    PerturbMode::AdditiveDiagonal => {
                        // D_{co} = Σ_g a(g, c, o) q_g
                        let mut dsum = vec![0.0; cout * cin * n];
                        for o in 0..cout {
                            for c in 0..cin {
                                let dst = &mut dsum[(o * cin + c) * n..(o * cin + c + 1) * n];
                                for (g, &a) in coeffs.pair(c, o).iter().enumerate() {
                                    if a != 0.0 {
                                        for (d, qv) in dst.iter_mut().zip(&q[g]) {
                                            *d += a * qv;
                                        }
                                    }
                                }
                            }
                        }
                        for (dev, f) in deviations.iter_mut().zip(signals) {
                            let mut total = 0.0;
                            for o in 0..cout {
                                for i in 0..n {
                                    let v: f64 = (0..cin).map(|c| dsum[(o * cin + c) * n + i] * f.channel(c)[i]).sum();
                                    total += v * v;
                                }
                            }
                            *dev = total.sqrt();
                        }
                    }
                    PerturbMode::Multiplicative => {
                        let mut tmp = vec![0.0; n];
                        for (dev, f) in deviations.iter_mut().zip(signals) {
                            let mut delta = vec![0.0; cout * n];
                            for c in 0..cin {
                                for (g, op) in bank.operators().iter().enumerate() {
                                    op.spmv_into(f.channel(c), &mut tmp);
                                    for o in 0..cout {
                                        let a = coeffs.get(g, c, o);
                                        if a != 0.0 {
                                            for ((d, t), qv) in delta[o * n..(o + 1) * n].iter_mut().zip(&tmp).zip(&q[g]) {
                                                *d += a * qv * t;
                                            }
                                        }
                                    }
                                }
                            }
                            *dev = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
                        }
                    }
                }
            }
            let mut sorted = deviations.clone();
            sorted.sort_by(f64::total_cmp);
            Ok(StabilityRow {
                epsilon: eps,
                median_dev: median(&sorted),
                max_dev: *sorted.last().unwrap_or(&0.0),
                seed: rng.seed(),
                deviations,
            })
        })
        .collect()
}

/// CSV `epsilon,median_dev,max_dev,seed`.
pub fn write_stability_csv<W: Write>(rows: &[StabilityRow], mut w: W) -> Result<()> {
    writeln!(w, "epsilon,median_dev,max_dev,seed")?;
    for r in rows {
        writeln!(w, "{:?},{:?},{:?},{}", r.epsilon, r.median_dev, r.max_dev, r.seed)?;
    }
    Ok(())
}
