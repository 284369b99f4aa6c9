//! Finite samplings of the signal domain and the signals living on them.

mod kdtree;
mod pointcloud;

pub use kdtree::{KdTree, EXHAUSTIVE_BELOW};
pub use pointcloud::{project_pointcloud, PointCloud};

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use crate::error::{check_dim, invalid, Error, Result};
use crate::numerics::Rng;

/// Smallest point count accepted by the random schemes.
pub const MIN_RANDOM_POINTS: usize = 8;

/// How a domain sampling is generated.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    /// Lattice `a + i (b - a) / (n - 1)` per axis.
    Grid {
        lower: Vec<f64>,
        upper: Vec<f64>,
        per_axis: Vec<usize>,
    },
    /// iid uniform on the box `[lower, upper]`.
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
        count: usize,
    },
    /// Polar draws `r ∈ (0, R]`, `θ ∈ (0, π]`, `φ ∈ (0, 2π]`, each uniform;
    /// denser towards the centre and the poles.
    Sphere { radius: f64, count: usize },
    /// iid `N(0, R·I₃)`.
    Gaussian { radius: f64, count: usize },
}

impl DomainSpec {
    /// Cube grid with `per_axis` points along each of `dim` axes.
    pub fn grid_cube(dim: usize, per_axis: usize, lower: f64, upper: f64) -> Self {
        DomainSpec::Grid {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
            per_axis: vec![per_axis; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Grid { lower, .. } | DomainSpec::Uniform { lower, .. } => lower.len(),
            DomainSpec::Sphere { .. } | DomainSpec::Gaussian { .. } => 3,
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            DomainSpec::Grid { .. } => Scheme::Grid,
            DomainSpec::Uniform { .. } => Scheme::Uniform,
            DomainSpec::Sphere { .. } => Scheme::Sphere,
            DomainSpec::Gaussian { .. } => Scheme::Gaussian,
        }
    }
}

fn join(v: &[impl fmt::Debug]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

/// `grid;lower=..;upper=..;n=..`, `uniform;lower=..;upper=..;count=..`,
/// `sphere;radius=..;count=..` or `gaussian;radius=..;count=..`, with
/// comma-separated per-axis lists.
impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainSpec::Grid { lower, upper, per_axis } => {
                write!(f, "grid;lower={};upper={};n={}", join(lower), join(upper), join(per_axis))
            }
            DomainSpec::Uniform { lower, upper, count } => {
                write!(f, "uniform;lower={};upper={};count={count}", join(lower), join(upper))
            }
            DomainSpec::Sphere { radius, count } => write!(f, "sphere;radius={radius:?};count={count}"),
            DomainSpec::Gaussian { radius, count } => write!(f, "gaussian;radius={radius:?};count={count}"),
        }
    }
}

impl std::str::FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(';');
        let scheme: Scheme = parts.next().unwrap_or_default().trim().parse()?;
        let mut fields = std::collections::BTreeMap::new();
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in domain spec, got {part:?}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str| -> Result<String> {
            fields
                .remove(key)
                .ok_or_else(|| Error::Parse(format!("domain spec {s:?} lacks {key}")))
        };
        fn list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>> {
            v.split(',').map(|x| crate::numerics::parse_field(x.trim())).collect()
        }
        let spec = match scheme {
            Scheme::Grid => DomainSpec::Grid {
                lower: list(&take("lower")?)?,
                upper: list(&take("upper")?)?,
                per_axis: list(&take("n")?)?,
            },
            Scheme::Uniform => DomainSpec::Uniform {
                lower: list(&take("lower")?)?,
                upper: list(&take("upper")?)?,
                count: crate::numerics::parse_field(&take("count")?)?,
            },
            Scheme::Sphere => DomainSpec::Sphere {
                radius: crate::numerics::parse_field(&take("radius")?)?,
                count: crate::numerics::parse_field(&take("count")?)?,
            },
            Scheme::Gaussian => DomainSpec::Gaussian {
                radius: crate::numerics::parse_field(&take("radius")?)?,
                count: crate::numerics::parse_field(&take("count")?)?,
            },
            Scheme::Custom => return Err(Error::Parse("custom domains are read from point files".into())),
        };
        if let Some(k) = fields.keys().next() {
            return Err(Error::Parse(format!("unknown domain spec key {k:?}")));
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Grid,
    Uniform,
    Sphere,
    Gaussian,
    Custom,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Grid => "grid",
            Scheme::Uniform => "uniform",
            Scheme::Sphere => "sphere",
            Scheme::Gaussian => "gaussian",
            Scheme::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid" => Ok(Scheme::Grid),
            "uniform" => Ok(Scheme::Uniform),
            "sphere" => Ok(Scheme::Sphere),
            "gaussian" => Ok(Scheme::Gaussian),
            "custom" => Ok(Scheme::Custom),
            _ => Err(Error::Parse(format!("unknown domain scheme {s:?}"))),
        }
    }
}

/// A finite point set `X̂ ⊂ ℝⁿ` with a nearest-neighbour index.
#[derive(Clone, Debug)]
pub struct DomainSampling {
    scheme: Scheme,
    spec: Option<DomainSpec>,
    seed: Option<u64>,
    /// Fundamental cell `(origin, period)` per axis for periodic domains.
    period: Option<(Vec<f64>, Vec<f64>)>,
    index: KdTree,
}

/// Generates a domain sampling. Grid ignores the random source.
pub fn make_domain(spec: &DomainSpec, rng: &mut Rng) -> Result<DomainSampling> {
    let check_box = |lower: &[f64], upper: &[f64]| -> Result<()> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() || lower.iter().zip(upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(invalid("domain bounds must satisfy lower < upper on every axis"));
        }
        Ok(())
    };
    let check_count = |count: usize| -> Result<()> {
        if count < MIN_RANDOM_POINTS {
            return Err(invalid(format!(
                "random domains need at least {MIN_RANDOM_POINTS} points, got {count}"
            )));
        }
        Ok(())
    };
    let check_radius = |r: f64| -> Result<()> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(invalid(format!("radius must be positive, got {r}")));
        }
        Ok(())
    };

    let (dim, points, seed) = match spec {
        DomainSpec::Grid { lower, upper, per_axis } => {
            check_box(lower, upper)?;
            check_dim(lower.len(), per_axis.len())?;
            if per_axis.iter().any(|&n| n < 2) {
                return Err(invalid("grid needs at least 2 points per axis"));
            }
            let d = lower.len();
            let total: usize = per_axis.iter().product();
            let mut pts = Vec::with_capacity(total * d);
            // first axis varies fastest
            for flat in 0..total {
                let mut rem = flat;
                for ax in 0..d {
                    let i = rem % per_axis[ax];
                    rem /= per_axis[ax];
                    let h = (upper[ax] - lower[ax]) / (per_axis[ax] - 1) as f64;
                    pts.push(lower[ax] + i as f64 * h);
                }
            }
            (d, pts, None)
        }
        DomainSpec::Uniform { lower, upper, count } => {
            check_box(lower, upper)?;
            check_count(*count)?;
            let d = lower.len();
            let pts = (0..count * d)
                .map(|j| rng.uniform_in(lower[j % d], upper[j % d]))
                .collect();
            (d, pts, Some(rng.seed()))
        }
        DomainSpec::Sphere { radius, count } => {
            check_radius(*radius)?;
            check_count(*count)?;
            let mut pts = Vec::with_capacity(count * 3);
            for _ in 0..*count {
                let r = radius * rng.uniform_open_closed();
                let theta = PI * rng.uniform_open_closed();
                let phi = 2.0 * PI * rng.uniform_open_closed();
                pts.extend_from_slice(&[
                    r * theta.sin() * phi.cos(),
                    r * theta.sin() * phi.sin(),
                    r * theta.cos(),
                ]);
            }
            (3, pts, Some(rng.seed()))
        }
        DomainSpec::Gaussian { radius, count } => {
            check_radius(*radius)?;
            check_count(*count)?;
            let sd = radius.sqrt();
            let pts = (0..count * 3).map(|_| sd * rng.normal()).collect();
            (3, pts, Some(rng.seed()))
        }
    };
    let mut domain = DomainSampling::build(spec.scheme(), dim, points)?;
    domain.spec = Some(spec.clone());
    domain.seed = seed;
    Ok(domain)
}

impl DomainSampling {
    fn build(scheme: Scheme, dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(invalid("domain needs a nonempty list of points"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("domain coordinates must be finite"));
        }
        let index = KdTree::new(dim, points);
        for i in 0..index.len() {
            let nn = index.nearest(index.point(i), 2);
            if nn.len() == 2 && nn[1].1 == 0.0 {
                return Err(Error::Degenerate(format!("domain points {} and {} coincide", nn[0].0, nn[1].0)));
            }
        }
        Ok(Self {
            scheme,
            spec: None,
            seed: None,
            period: None,
            index,
        })
    }

    /// Wraps explicit coordinates (flat, row-major).
    pub fn from_points(dim: usize, points: Vec<f64>) -> Result<Self> {
        Self::build(Scheme::Custom, dim, points)
    }

    /// Integer lattice `{0, .., n-1}` per axis with periodic wrap-around, the
    /// setting where translations act exactly.
    pub fn periodic_lattice(per_axis: &[usize]) -> Result<Self> {
        let d = per_axis.len();
        let spec = DomainSpec::Grid {
            lower: vec![0.0; d],
            upper: per_axis.iter().map(|&n| n as f64 - 1.0).collect(),
            per_axis: per_axis.to_vec(),
        };
        let domain = make_domain(&spec, &mut Rng::new(0))?;
        let period = per_axis.iter().map(|&n| n as f64).collect();
        Ok(domain.with_period(vec![0.0; d], period))
    }

    /// Declares the domain periodic with the given fundamental cell.
    pub fn with_period(mut self, origin: Vec<f64>, period: Vec<f64>) -> Self {
        assert_eq!(origin.len(), self.dim());
        assert_eq!(period.len(), self.dim());
        self.period = Some((origin, period));
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn spec(&self) -> Option<&DomainSpec> {
        self.spec.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.index.point(i)
    }

    pub fn points(&self) -> &[f64] {
        self.index.points()
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    /// Maps a point back into the fundamental cell; identity on
    /// non-periodic domains.
    pub fn wrap(&self, x: &mut [f64]) {
        if let Some((origin, period)) = &self.period {
            for ((v, o), p) in x.iter_mut().zip(origin).zip(period) {
                *v = o + (*v - o).rem_euclid(*p);
            }
        }
    }

    /// FNV-1a hash of the coordinates, stable across runs and platforms.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.points() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn period(&self) -> Option<(&[f64], &[f64])> {
        self.period.as_ref().map(|(o, p)| (o.as_slice(), p.as_slice()))
    }

    /// Rebuilds a saved sampling, keeping its provenance.
    pub fn restore(
        scheme: Scheme,
        spec: Option<DomainSpec>,
        seed: Option<u64>,
        dim: usize,
        points: Vec<f64>,
    ) -> Result<Self> {
        let mut d = Self::build(scheme, dim, points)?;
        d.spec = spec;
        d.seed = seed;
        Ok(d)
    }

    /// Reads whitespace-separated points, one per line.
    pub fn read_points<R: std::io::BufRead>(r: R) -> Result<(usize, Vec<f64>)> {
        let mut dim = 0;
        let mut points = Vec::new();
        for line in r.lines() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].starts_with('#') {
                continue;
            }
            if dim == 0 {
                dim = fields.len();
            } else if fields.len() != dim {
                return Err(Error::Parse(format!("expected {dim} coordinates, got {}", fields.len())));
            }
            for f in fields {
                points.push(crate::numerics::parse_field(f)?);
            }
        }
        Ok((dim, points))
    }

    /// Writes the points as whitespace-separated text, one per line.
    pub fn write_points<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.len() {
            let line: Vec<String> = self.point(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// The `k` nearest domain points to `query`, nearest first, ties broken by
/// ascending index.
pub fn nearest_in_domain(domain: &DomainSampling, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k > domain.len() {
        return Err(invalid(format!("k = {k} exceeds the {} domain points", domain.len())));
    }
    check_dim(domain.dim(), query.len())?;
    Ok(domain.index.nearest(query, k))
}

/// Values on a domain sampling, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSignal {
    nodes: usize,
    channels: usize,
    values: Vec<f64>,
}

impl DiscreteSignal {
    pub fn new(nodes: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        check_dim(nodes * channels, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("signal values must be finite"));
        }
        Ok(Self { nodes, channels, values })
    }

    pub fn single(values: Vec<f64>) -> Self {
        Self {
            nodes: values.len(),
            channels: 1,
            values,
        }
    }

    pub fn zeros(nodes: usize, channels: usize) -> Self {
        Self {
            nodes,
            channels,
            values: vec![0.0; nodes * channels],
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.nodes..(c + 1) * self.nodes]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.nodes..(c + 1) * self.nodes]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `index,value` CSV for one channel.
    pub fn write_channel_csv<W: Write>(&self, channel: usize, mut w: W) -> Result<()> {
        if channel >= self.channels {
            return Err(invalid(format!("channel {channel} out of range")));
        }
        writeln!(w, "index,value")?;
        for (i, v) in self.channel(channel).iter().enumerate() {
            writeln!(w, "{i},{v:?}")?;
        }
        Ok(())
    }

    /// Reads a single-channel `index,value` CSV.
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut values = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad signal row {line:?}")))?;
            let i: usize = crate::numerics::parse_field(i.trim())?;
            if i != values.len() {
                return Err(Error::Parse(format!("signal rows out of order at index {i}")));
            }
            values.push(crate::numerics::parse_field(v.trim())?);
        }
        Self::new(values.len(), 1, values)
    }
}
