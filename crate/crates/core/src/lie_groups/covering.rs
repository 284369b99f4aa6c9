//! Covering-radius estimates and low-discrepancy probe sets.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{sample_group, GroupElement, GroupKind, LieGroupSpec, SamplingSet};
use crate::error::{invalid, Result};
use crate::numerics::{rotation_2d, DenseMatrix};

pub const DEFAULT_PROBE_COUNT: usize = 10_000;

/// Discrete covering radius: the largest distance from any probe to its
/// nearest set element.
///
/// This estimates the true covering radius only over the region the probes
/// represent; dense probes over the whole group are the caller's job.
pub fn covering_radius(set: &SamplingSet, probes: &[GroupElement]) -> Result<f64> {
    if set.is_empty() {
        return Err(invalid("covering radius of an empty set"));
    }
    if probes.is_empty() {
        return Err(invalid("covering radius needs at least one probe"));
    }
    let spec = set.spec();
    for p in probes {
        spec.check_element(p)?;
    }
    let elements = set.elements();
    let radius = match spec.kind() {
        GroupKind::So3 => {
            let quats: Vec<[f64; 4]> = elements.iter().map(quat_from_rotation).collect();
            probes
                .par_iter()
                .map(|p| {
                    let q = quat_from_rotation(p);
                    // the largest |<q, q_i>| is the smallest rotation angle
                    let mut best = (0, f64::NEG_INFINITY);
                    for (i, e) in quats.iter().enumerate() {
                        let dot = (q[0] * e[0] + q[1] * e[1] + q[2] * e[2] + q[3] * e[3]).abs();
                        if dot > best.1 {
                            best = (i, dot);
                        }
                    }
                    spec.distance_unchecked(p, &elements[best.0])
                })
                .reduce(|| 0.0, f64::max)
        }
        _ => probes
            .par_iter()
            .map(|p| {
                elements
                    .iter()
                    .map(|e| spec.distance_unchecked(p, e))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max),
    };
    Ok(radius)
}

/// Exact covering radius of a finite subset of SO(2): half the widest gap
/// between consecutive angles around the circle.
pub fn so2_covering_radius_exact(set: &SamplingSet) -> Result<f64> {
    if set.spec().kind() != GroupKind::So2 {
        return Err(invalid("exact covering radius is only available for so2"));
    }
    if set.is_empty() {
        return Err(invalid("covering radius of an empty set"));
    }
    let mut angles: Vec<f64> = set
        .elements()
        .iter()
        .map(|g| g[(1, 0)].atan2(g[(0, 0)]).rem_euclid(2.0 * PI))
        .collect();
    angles.sort_by(f64::total_cmp);
    let mut gap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    Ok(0.5 * gap)
}

/// `n` rotations at angles `(i + 1/2)·2π/n`.
pub fn so2_probes(n: usize) -> Vec<GroupElement> {
    (0..n)
        .map(|i| rotation_2d((i as f64 + 0.5) * 2.0 * PI / n as f64))
        .collect()
}

/// Super-Fibonacci spiral on the unit quaternions, mapped to rotation
/// matrices. Deterministic and close to uniform on SO(3).
pub fn so3_probes(n: usize) -> Vec<GroupElement> {
    const PHI: f64 = std::f64::consts::SQRT_2;
    const PSI: f64 = 1.533_751_168_755_204_3;
    (0..n)
        .map(|i| {
            let s = i as f64 + 0.5;
            let t = s / n as f64;
            let (r, big_r) = (t.sqrt(), (1.0 - t).sqrt());
            let alpha = 2.0 * PI * s / PHI;
            let beta = 2.0 * PI * s / PSI;
            rotation_from_quat([r * alpha.sin(), r * alpha.cos(), big_r * beta.sin(), big_r * beta.cos()])
        })
        .collect()
}

/// Unit quaternion `(w, x, y, z)` to rotation matrix.
pub(crate) fn rotation_from_quat(q: [f64; 4]) -> DenseMatrix {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    DenseMatrix::new(
        3,
        3,
        vec![
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    )
    .expect("3x3 rotation")
}

pub(crate) fn quat_from_rotation(m: &DenseMatrix) -> [f64; 4] {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [0.25 * s, (m[(2, 1)] - m[(1, 2)]) / s, (m[(0, 2)] - m[(2, 0)]) / s, (m[(1, 0)] - m[(0, 1)]) / s]
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        [(m[(2, 1)] - m[(1, 2)]) / s, 0.25 * s, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s]
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        [(m[(0, 2)] - m[(2, 0)]) / s, (m[(0, 1)] + m[(1, 0)]) / s, 0.25 * s, (m[(1, 2)] + m[(2, 1)]) / s]
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        [(m[(1, 0)] - m[(0, 1)]) / s, (m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, 0.25 * s]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandwidthRow {
    pub delta: f64,
    pub range_steps: usize,
    pub set_size: usize,
    pub r_star: f64,
    /// `1 / r*`, the bandwidth proxy.
    pub inverse: f64,
}

/// Covering radius of `Ĝ^k_{δ,N}` for each `δ` at a fixed range `Nδ`.
pub fn bandwidth_sweep(
    spec: &LieGroupSpec,
    deltas: &[f64],
    fixed_range: f64,
    order: usize,
    dedup_tol: f64,
    probes: &[GroupElement],
) -> Result<Vec<BandwidthRow>> {
    if !(fixed_range > 0.0) {
        return Err(invalid("range must be positive"));
    }
    deltas
        .iter()
        .map(|&delta| {
            if !(delta > 0.0) {
                return Err(invalid(format!("resolution must be positive, got {delta}")));
            }
            let ratio = fixed_range / delta;
            let steps = ratio.round();
            if steps < 1.0 || (ratio - steps).abs() > 1e-12 * ratio.max(1.0) {
                return Err(invalid(format!("resolution {delta} does not divide range {fixed_range}")));
            }
            let set = sample_group(spec, delta, steps as usize, order, dedup_tol)?;
            let r_star = covering_radius(&set, probes)?;
            Ok(BandwidthRow {
                delta,
                range_steps: steps as usize,
                set_size: set.len(),
                r_star,
                inverse: 1.0 / r_star,
            })
        })
        .collect()
}
