use std::io::{BufRead, Write};

use super::{DiscreteSignal, DomainSampling, KdTree};
use crate::error::{check_dim, invalid, Error, Result};
use crate::numerics::parse_field;

/// Points in ℝ³ carrying a scalar value each.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
    values: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, values: Vec<f64>) -> Result<Self> {
        check_dim(points.len(), values.len())?;
        if points.iter().flatten().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("point cloud entries must be finite"));
        }
        Ok(Self { points, values })
    }

    /// Unit value on every point.
    pub fn unit(points: Vec<[f64; 3]>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lines `x y z [value]`; blank lines and `#` comments are skipped.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut points = Vec::new();
        let mut values = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 && fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 or 4 fields, got {}",
                    n + 1,
                    fields.len()
                )));
            }
            points.push([parse_field(fields[0])?, parse_field(fields[1])?, parse_field(fields[2])?]);
            values.push(match fields.get(3) {
                Some(v) => parse_field(v)?,
                None => 1.0,
            });
        }
        Self::new(points, values)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for (p, v) in self.points.iter().zip(&self.values) {
            writeln!(w, "{:?} {:?} {:?} {:?}", p[0], p[1], p[2], v)?;
        }
        Ok(())
    }
}

/// Soft occupancy of each domain point:
/// `max(0, ξ − mean over the k nearest cloud points x of ‖x − s‖ / f(x))`.
pub fn project_pointcloud(cloud: &PointCloud, domain: &DomainSampling, k: usize, xi: f64) -> Result<DiscreteSignal> {
    if cloud.is_empty() {
        return Err(invalid("point cloud is empty"));
    }
    if k == 0 || k > cloud.len() {
        return Err(invalid(format!("k = {k} must lie in 1..={}", cloud.len())));
    }
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(invalid(format!("xi must be positive, got {xi}")));
    }
    if cloud.values.iter().any(|&v| v == 0.0) {
        return Err(invalid("point cloud values must be nonzero"));
    }
    check_dim(3, domain.dim())?;
    let tree = KdTree::new(3, cloud.points.iter().flatten().copied().collect());
    let values = (0..domain.len())
        .map(|i| {
            let mean = tree
                .nearest(domain.point(i), k)
                .iter()
                .map(|&(j, d)| d / cloud.values[j])
                .sum::<f64>()
                / k as f64;
            (xi - mean).max(0.0)
        })
        .collect();
    DiscreteSignal::new(domain.len(), 1, values)
}
