//! Sparse interpolation weights: a query value as a combination of the
//! values at its nearest sample points.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::signal_domain::KdTree;

/// Largest barycentric weight magnitude accepted before falling back to
/// inverse-distance weights.
pub const LAMBDA_MAX: f64 = 4.0;
/// Distances at or below this count as an exact hit.
pub const EXACT_HIT_TOL: f64 = 1e-12;
pub const DEFAULT_IDW_K: usize = 4;
pub const DEFAULT_IDW_POWER: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct InterpResult {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Set when barycentric weights were replaced by inverse-distance ones.
    pub fallback: bool,
}

impl InterpResult {
    fn exact(index: usize) -> Self {
        Self {
            indices: vec![index],
            weights: vec![1.0],
            fallback: false,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InterpScheme {
    Barycentric { k: usize },
    InverseDistance { k: usize, power: f64 },
}

impl InterpScheme {
    /// Simplex-sized barycentric scheme for dimension `dim`.
    pub fn barycentric_default(dim: usize) -> Self {
        InterpScheme::Barycentric { k: dim + 1 }
    }

    pub fn inverse_distance_default() -> Self {
        InterpScheme::InverseDistance {
            k: DEFAULT_IDW_K,
            power: DEFAULT_IDW_POWER,
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            InterpScheme::Barycentric { k } | InterpScheme::InverseDistance { k, .. } => k,
        }
    }

    pub fn interpolate(&self, query: &[f64], candidates: &KdTree) -> Result<InterpResult> {
        match *self {
            InterpScheme::Barycentric { k } => barycentric(query, candidates, k),
            InterpScheme::InverseDistance { k, power } => inverse_distance(query, candidates, k, power),
        }
    }
}

impl std::fmt::Display for InterpScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InterpScheme::Barycentric { k } => write!(f, "barycentric:{k}"),
            InterpScheme::InverseDistance { k, power } => write!(f, "idw:{k}:{power:?}"),
        }
    }
}

impl std::str::FromStr for InterpScheme {
    type Err = Error;

    /// `barycentric[:k]` or `idw[:k[:power]]`; a missing barycentric `k`
    /// parses as 0 and must be resolved with [`InterpScheme::resolve`].
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let num = |p: Option<&str>| -> Result<Option<f64>> {
            p.map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad interpolation parameter {v:?}"))))
                .transpose()
        };
        let a = num(parts.next())?;
        let b = num(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Parse(format!("too many fields in {s:?}")));
        }
        let as_k = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Parse(format!("neighbour count must be a positive integer, got {v}")))
            }
        };
        match name {
            "barycentric" | "bary" if b.is_none() => Ok(InterpScheme::Barycentric {
                k: a.map(as_k).transpose()?.unwrap_or(0),
            }),
            "idw" | "inverse-distance" => Ok(InterpScheme::InverseDistance {
                k: a.map(as_k).transpose()?.unwrap_or(DEFAULT_IDW_K),
                power: b.unwrap_or(DEFAULT_IDW_POWER),
            }),
            _ => Err(Error::Parse(format!("unknown interpolation scheme {s:?}"))),
        }
    }
}

impl InterpScheme {
    /// Fills in a defaulted barycentric `k` for dimension `dim`.
    pub fn resolve(self, dim: usize) -> Self {
        match self {
            InterpScheme::Barycentric { k: 0 } => Self::barycentric_default(dim),
            other => other,
        }
    }
}

fn neighbours(query: &[f64], candidates: &KdTree, k: usize) -> Result<Vec<(usize, f64)>> {
    check_dim(candidates.dim(), query.len())?;
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k > candidates.len() {
        return Err(invalid(format!("k = {k} exceeds the {} candidates", candidates.len())));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(invalid("query must be finite"));
    }
    Ok(candidates.nearest(query, k))
}

/// Weights `λ` with `Σλᵢ = 1` and `Σλᵢ (xᵢ − q) = 0` over the `k` nearest
/// candidates (minimum-norm least squares when `k > p + 1`).
pub fn barycentric(query: &[f64], candidates: &KdTree, k: usize) -> Result<InterpResult> {
    let p = query.len();
    if k < p + 1 {
        return Err(invalid(format!("barycentric needs k >= {}, got {k}", p + 1)));
    }
    let nn = neighbours(query, candidates, k)?;
    if nn[0].1 <= EXACT_HIT_TOL {
        return Ok(InterpResult::exact(nn[0].0));
    }
    // offsets scaled by the farthest neighbour for conditioning
    let scale = nn[k - 1].1;
    let mut a = DMatrix::<f64>::zeros(p + 1, k);
    for (j, &(i, _)) in nn.iter().enumerate() {
        a[(0, j)] = 1.0;
        for (r, (x, q)) in candidates.point(i).iter().zip(query).enumerate() {
            a[(r + 1, j)] = (x - q) / scale;
        }
    }
    let mut b = DVector::<f64>::zeros(p + 1);
    b[0] = 1.0;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1.0);
    let full_rank = svd.rank(tol) == p + 1;
    if full_rank {
        if let Ok(lambda) = svd.solve(&b, tol) {
            if lambda.iter().all(|l| l.is_finite() && l.abs() <= LAMBDA_MAX) {
                return Ok(InterpResult {
                    indices: nn.iter().map(|&(i, _)| i).collect(),
                    weights: lambda.iter().copied().collect(),
                    fallback: false,
                });
            }
        }
    }
    let mut r = idw_weights(&nn, DEFAULT_IDW_POWER)?;
    r.fallback = true;
    Ok(r)
}

/// Weights proportional to `d^-power`, normalised to sum to one.
pub fn inverse_distance(query: &[f64], candidates: &KdTree, k: usize, power: f64) -> Result<InterpResult> {
    if !power.is_finite() || power < 0.0 {
        return Err(invalid(format!("power must be nonnegative, got {power}")));
    }
    let nn = neighbours(query, candidates, k)?;
    idw_weights(&nn, power)
}

fn idw_weights(nn: &[(usize, f64)], power: f64) -> Result<InterpResult> {
    if nn[0].1 <= EXACT_HIT_TOL {
        return Ok(InterpResult::exact(nn[0].0));
    }
    // relative to the nearest distance to avoid overflow for large powers
    let d0 = nn[0].1;
    let raw: Vec<f64> = nn.iter().map(|&(_, d)| (d0 / d).powf(power)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate("inverse-distance weights are not normalisable".into()));
    }
    Ok(InterpResult {
        indices: nn.iter().map(|&(i, _)| i).collect(),
        weights: raw.iter().map(|w| w / total).collect(),
        fallback: false,
    })
}

/// `Σ wᵢ · values[nᵢ]`.
pub fn interpolate_signal(result: &InterpResult, values: &[f64]) -> Result<f64> {
    check_dim(result.indices.len(), result.weights.len())?;
    let mut acc = 0.0;
    for (&i, &w) in result.indices.iter().zip(&result.weights) {
        let v = values
            .get(i)
            .ok_or_else(|| invalid(format!("index {i} out of range for {} values", values.len())))?;
        acc += w * v;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn tree(dim: usize, pts: &[f64]) -> KdTree {
        KdTree::new(dim, pts.to_vec())
    }

    #[test]
    fn exact_hit_short_circuits() {
        let t = tree(2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        for k in 3..=4 {
            let r = barycentric(&[1.0, 0.0], &t, k).unwrap();
            assert_eq!(r, InterpResult { indices: vec![1], weights: vec![1.0], fallback: false });
        }
        assert_eq!(inverse_distance(&[0.0, 1.0], &t, 4, 2.0).unwrap().indices, vec![2]);
    }

    #[test]
    fn midpoint_in_one_dimension() {
        let t = tree(1, &[0.0, 1.0, 5.0]);
        let r = barycentric(&[0.5], &t, 2).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
        assert!((r.weights[0] - 0.5).abs() < 1e-15 && (r.weights[1] - 0.5).abs() < 1e-15);
    }

    /// Cramer's rule on `[1 1 1; x; y] λ = [1; qx; qy]`.
    fn cramer(p: [[f64; 2]; 3], q: [f64; 2]) -> [f64; 3] {
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let m = [[1.0; 3], [p[0][0], p[1][0], p[2][0]], [p[0][1], p[1][1], p[2][1]]];
        let rhs = [1.0, q[0], q[1]];
        let d = det(m);
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let mut mc = m;
            for r in 0..3 {
                mc[r][c] = rhs[r];
            }
            *o = det(mc) / d;
        }
        out
    }

    #[test]
    fn triangle_weights_match_cramer() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let p: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)]);
            let (a, b) = (rng.uniform(), rng.uniform());
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let q = [
                p[0][0] + a * (p[1][0] - p[0][0]) + b * (p[2][0] - p[0][0]),
                p[0][1] + a * (p[1][1] - p[0][1]) + b * (p[2][1] - p[0][1]),
            ];
            let want = cramer(p, q);
            if want.iter().any(|l| l.abs() > LAMBDA_MAX) {
                continue;
            }
            let t = tree(2, &p.concat());
            let r = barycentric(&q, &t, 3).unwrap();
            assert!(!r.fallback);
            for (&i, &w) in r.indices.iter().zip(&r.weights) {
                assert!((w - want[i]).abs() < 1e-10, "{w} vs {}", want[i]);
            }
        }
    }

    #[test]
    fn idw_examples() {
        let t = tree(1, &[1.0, -1.0]);
        for power in [0.5, 1.0, 3.0] {
            let r = inverse_distance(&[0.0], &t, 2, power).unwrap();
            assert_eq!(r.weights, vec![0.5, 0.5]);
        }
        let t = tree(1, &[1.0, 2.0]);
        let r = inverse_distance(&[0.0], &t, 2, 1.0).unwrap();
        assert!((r.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.weights[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(inverse_distance(&[0.0], &t, 3, 1.0).is_err());
        assert!(inverse_distance(&[0.0], &t, 0, 1.0).is_err());
    }

    #[test]
    fn degenerate_neighbours_fall_back() {
        // collinear neighbours cannot pin a 2D query off the line
        let t = tree(2, &[0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let r = barycentric(&[1.5, 0.5], &t, 3).unwrap();
        assert!(r.fallback);
        assert!((r.weight_sum() - 1.0).abs() < 1e-15);
        // far outside the hull the weights blow past the guard
        let t = tree(1, &[0.0, 1.0]);
        let r = barycentric(&[10.0], &t, 2).unwrap();
        assert!(r.fallback);
        assert!(r.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        // mild extrapolation is kept
        let r = barycentric(&[1.5], &t, 2).unwrap();
        assert!(!r.fallback);
        assert!((r.weights[0] - 1.5).abs() < 1e-12 && (r.weights[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let t = tree(2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(barycentric(&[0.2, 0.2], &t, 2).is_err());
        assert!(barycentric(&[0.2, 0.2], &t, 4).is_err());
        assert!(barycentric(&[0.2], &t, 3).is_err());
        assert!(inverse_distance(&[0.2, 0.2], &t, 2, -1.0).is_err());
        let r = InterpResult { indices: vec![5], weights: vec![1.0], fallback: false };
        assert!(interpolate_signal(&r, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("barycentric".parse::<InterpScheme>().unwrap().resolve(3), InterpScheme::Barycentric { k: 4 });
        assert_eq!("barycentric:6".parse::<InterpScheme>().unwrap(), InterpScheme::Barycentric { k: 6 });
        assert_eq!(
            "idw:5:1.5".parse::<InterpScheme>().unwrap(),
            InterpScheme::InverseDistance { k: 5, power: 1.5 }
        );
        assert_eq!("idw".parse::<InterpScheme>().unwrap(), InterpScheme::inverse_distance_default());
        for bad in ["linear", "idw:0", "idw:2.5", "barycentric:3:1"] {
            assert!(bad.parse::<InterpScheme>().is_err(), "{bad}");
        }
        let s = InterpScheme::InverseDistance { k: 4, power: 2.0 };
        assert_eq!(s.to_string().parse::<InterpScheme>().unwrap(), s);
    }

    proptest! {
        #[test]
        fn affine_reproduction(seed in 0u64..300, extra in 0usize..4) {
            let mut rng = Rng::new(seed);
            let pts: Vec<f64> = (0..60 * 3).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let t = tree(3, &pts);
            let c = [rng.normal(), rng.normal(), rng.normal()];
            let d = rng.normal();
            let values: Vec<f64> = pts.chunks(3).map(|x| c[0] * x[0] + c[1] * x[1] + c[2] * x[2] + d).collect();
            let q = [rng.uniform_in(-0.8, 0.8), rng.uniform_in(-0.8, 0.8), rng.uniform_in(-0.8, 0.8)];
            let r = barycentric(&q, &t, 4 + extra).unwrap();
            prop_assert!((r.weight_sum() - 1.0).abs() < 1e-9);
            if !r.fallback {
                let got = interpolate_signal(&r, &values).unwrap();
                let want = c[0] * q[0] + c[1] * q[1] + c[2] * q[2] + d;
                prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
            }
            let mut uniq = r.indices.clone();
            uniq.sort();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), r.indices.len());
            prop_assert_eq!(barycentric(&q, &t, 4 + extra).unwrap(), r);
        }

        #[test]
        fn constants_and_linearity(seed in 0u64..300, k in 1usize..8, power in 0.0f64..4.0) {
            let mut rng = Rng::new(seed);
            let pts: Vec<f64> = (0..30 * 2).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let t = tree(2, &pts);
            let q = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
            let r = inverse_distance(&q, &t, k, power).unwrap();
            prop_assert!((interpolate_signal(&r, &[2.5; 30]).unwrap() - 2.5).abs() < 1e-12);
            let u: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
            let s = 0.7;
            let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            let lhs = interpolate_signal(&r, &mix).unwrap();
            let rhs = interpolate_signal(&r, &u).unwrap() + s * interpolate_signal(&r, &v).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
