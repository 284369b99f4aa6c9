//! Knot point clouds under random rotations, and their projection onto a
//! domain sampling.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::learning::Sample;
use crate::lie_groups::GroupElement;
use crate::numerics::{parse_field, DenseMatrix, Rng};
use crate::signal_domain::{project_pointcloud, DiscreteSignal, DomainSampling, PointCloud};

pub const DEFAULT_KNOT_POINTS: usize = 200;
pub const DEFAULT_PROJECTION_K: usize = 3;
pub const DEFAULT_XI: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KnotLabel {
    Trefoil = 0,
    Listing = 1,
}

impl KnotLabel {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(KnotLabel::Trefoil),
            1 => Ok(KnotLabel::Listing),
            _ => Err(invalid(format!("knot label {i} out of range"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for KnotLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnotLabel::Trefoil => "trefoil",
            KnotLabel::Listing => "listing",
        })
    }
}

impl FromStr for KnotLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trefoil" => Ok(KnotLabel::Trefoil),
            "listing" => Ok(KnotLabel::Listing),
            _ => Err(Error::Parse(format!("unknown knot {s:?}"))),
        }
    }
}

/// `n` evenly spaced points `t = 2πi/n` on the knot.
pub fn knot_curve(label: KnotLabel, n: usize) -> Result<Vec<[f64; 3]>> {
    if n < 3 {
        return Err(invalid(format!("knot needs at least 3 points, got {n}")));
    }
    Ok((0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            match label {
                KnotLabel::Trefoil => [
                    t.cos() + 2.0 * (2.0 * t).cos(),
                    t.sin() - 2.0 * (2.0 * t).sin(),
                    -(3.0 * t).sin(),
                ],
                KnotLabel::Listing => {
                    let r = 2.0 + (2.0 * t).cos();
                    [r * (3.0 * t).cos(), r * (3.0 * t).sin(), (4.0 * t).sin()]
                }
            }
        })
        .collect())
}

/// Uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut Rng) -> GroupElement {
    let (w, x, y, z) = loop {
        let q = [rng.normal(), rng.normal(), rng.normal(), rng.normal()];
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
    };
    DenseMatrix::new(
        3,
        3,
        vec![
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    )
    .expect("3x3 rotation")
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnotSample {
    pub points: Vec<[f64; 3]>,
    pub label: KnotLabel,
    pub pose: GroupElement,
    pub sigma: f64,
    /// Stream id of the generator the sample was drawn from.
    pub stream: u64,
}

impl KnotSample {
    pub fn cloud(&self) -> PointCloud {
        PointCloud::unit(self.points.clone()).expect("finite knot points")
    }
}

/// Rotates the curve by `pose`, then adds iid `N(0, σ²)` jitter per
/// coordinate from `rng`.
pub fn make_knot_sample(label: KnotLabel, n: usize, pose: GroupElement, sigma: f64, rng: &mut Rng) -> Result<KnotSample> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid("jitter must be nonnegative"));
    }
    if pose.rows() != 3 || pose.cols() != 3 {
        return Err(invalid("pose must be a 3x3 rotation"));
    }
    let points = knot_curve(label, n)?
        .into_iter()
        .map(|p| {
            let r = pose.data();
            let mut q = [0.0; 3];
            for (i, qi) in q.iter_mut().enumerate() {
                *qi = r[3 * i] * p[0] + r[3 * i + 1] * p[1] + r[3 * i + 2] * p[2];
            }
            if sigma > 0.0 {
                for v in &mut q {
                    *v += sigma * rng.normal();
                }
            }
            q
        })
        .collect();
    Ok(KnotSample {
        points,
        label,
        pose,
        sigma,
        stream: rng.stream(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnotConfig {
    pub points: usize,
    pub train: usize,
    pub test: usize,
    pub sigma_train: f64,
    pub sigma_test: f64,
    /// Identity pose when unset.
    pub random_pose: bool,
    pub seed: u64,
}

impl Default for KnotConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_KNOT_POINTS,
            train: 120,
            test: 140,
            sigma_train: 0.01,
            sigma_test: 0.1,
            random_pose: true,
            seed: 0,
        }
    }
}

impl KnotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train % 2 == 1 || self.test % 2 == 1 {
            return Err(invalid("split sizes must be even for class balance"));
        }
        if self.points < 3 {
            return Err(invalid("knots need at least 3 points"));
        }
        if !(self.sigma_train >= 0.0) || !(self.sigma_test >= 0.0) {
            return Err(invalid("jitter must be nonnegative"));
        }
        Ok(())
    }
}

fn make_split(config: &KnotConfig, count: usize, sigma: f64, rng: &Rng) -> Result<Vec<KnotSample>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.fork(i as u64);
            let label = KnotLabel::from_index(i % 2)?;
            let pose = if config.random_pose {
                random_rotation(&mut r)
            } else {
                DenseMatrix::identity(3)
            };
            make_knot_sample(label, config.points, pose, sigma, &mut r)
        })
        .collect()
}

/// `(train, test)` with alternating labels, so each split is balanced.
/// Sample `i` of a split draws from its own forked generator.
pub fn make_knot_dataset(config: &KnotConfig) -> Result<(Vec<KnotSample>, Vec<KnotSample>)> {
    config.validate()?;
    let root = Rng::new(config.seed);
    let train = make_split(config, config.train, config.sigma_train, &root.fork(0))?;
    let test = make_split(config, config.test, config.sigma_test, &root.fork(1))?;
    Ok((train, test))
}

/// Projects every cloud with unit values.
pub fn project_dataset(clouds: &[(PointCloud, usize)], domain: &DomainSampling, k: usize, xi: f64) -> Result<Vec<Sample>> {
    clouds
        .par_iter()
        .map(|(c, y)| Ok((project_pointcloud(c, domain, k, xi)?, *y)))
        .collect()
}

pub fn knot_clouds(samples: &[KnotSample]) -> Vec<(PointCloud, usize)> {
    samples.iter().map(|s| (s.cloud(), s.label.index())).collect()
}

fn sample_file(i: usize) -> String {
    format!("sample_{i:05}.xyz")
}

/// One `.xyz` point-cloud file per sample plus `labels.csv`
/// (`file,label`).
pub fn write_split(dir: &Path, clouds: &[(PointCloud, usize)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut labels = BufWriter::new(std::fs::File::create(dir.join("labels.csv"))?);
    writeln!(labels, "file,label")?;
    for (i, (c, y)) in clouds.iter().enumerate() {
        let name = sample_file(i);
        let mut w = BufWriter::new(std::fs::File::create(dir.join(&name))?);
        c.write_to(&mut w)?;
        w.flush()?;
        writeln!(labels, "{name},{y}")?;
    }
    labels.flush()?;
    Ok(())
}

fn read_labels(dir: &Path) -> Result<Vec<(String, usize)>> {
    let f = std::fs::File::open(dir.join("labels.csv"))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let (file, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad label row {line:?}")))?;
        if file.contains('/') || file.contains('\\') || file.starts_with('.') {
            return Err(Error::Parse(format!("label row names a path outside the split: {file:?}")));
        }
        out.push((file.trim().to_string(), parse_field(label.trim())?));
    }
    Ok(out)
}

pub fn read_split(dir: &Path) -> Result<Vec<(PointCloud, usize)>> {
    read_labels(dir)?
        .into_iter()
        .map(|(file, y)| {
            let f = std::fs::File::open(dir.join(file))?;
            Ok((PointCloud::read_from(BufReader::new(f))?, y))
        })
        .collect()
}

/// Writes `train/` and `test/` under `root` along with `dataset.meta`.
pub fn write_knot_dataset(root: &Path, config: &KnotConfig, train: &[KnotSample], test: &[KnotSample]) -> Result<()> {
    std::fs::create_dir_all(root)?;
    let mut m = BufWriter::new(std::fs::File::create(root.join("dataset.meta"))?);
    writeln!(m, "kind = knots")?;
    writeln!(m, "points = {}", config.points)?;
    writeln!(m, "train = {}", config.train)?;
    writeln!(m, "test = {}", config.test)?;
    writeln!(m, "sigma_train = {:?}", config.sigma_train)?;
    writeln!(m, "sigma_test = {:?}", config.sigma_test)?;
    writeln!(m, "random_pose = {}", config.random_pose)?;
    writeln!(m, "seed = {}", config.seed)?;
    m.flush()?;
    write_split(&root.join("train"), &knot_clouds(train))?;
    write_split(&root.join("test"), &knot_clouds(test))
}

/// Cache directory of projections of `split` onto `domain`.
pub fn projection_dir(split: &Path, domain: &DomainSampling, k: usize, xi: f64) -> PathBuf {
    split.join(format!("projected_{:016x}_k{k}_xi{}", domain.content_hash(), xi.to_bits()))
}

/// One `index,value` CSV per sample plus `labels.csv`.
pub fn write_projected(dir: &Path, samples: &[Sample]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut labels = BufWriter::new(std::fs::File::create(dir.join("labels.csv"))?);
    writeln!(labels, "file,label")?;
    for (i, (s, y)) in samples.iter().enumerate() {
        let name = format!("signal_{i:05}.csv");
        let mut w = BufWriter::new(std::fs::File::create(dir.join(&name))?);
        s.write_channel_csv(0, &mut w)?;
        w.flush()?;
        writeln!(labels, "{name},{y}")?;
    }
    labels.flush()?;
    Ok(())
}

pub fn read_projected(dir: &Path) -> Result<Vec<Sample>> {
    read_labels(dir)?
        .into_iter()
        .map(|(file, y)| {
            let f = std::fs::File::open(dir.join(file))?;
            Ok((DiscreteSignal::read_csv(BufReader::new(f))?, y))
        })
        .collect()
}

/// Projections of the split at `dir`, read from the cache when present
/// and written to it otherwise.
pub fn load_or_project(split: &Path, domain: &DomainSampling, k: usize, xi: f64) -> Result<Vec<Sample>> {
    let cache = projection_dir(split, domain, k, xi);
    if cache.join("labels.csv").is_file() {
        let samples = read_projected(&cache)?;
        if samples.iter().all(|(s, _)| s.nodes() == domain.len()) {
            return Ok(samples);
        }
    }
    let samples = project_dataset(&read_split(split)?, domain, k, xi)?;
    write_projected(&cache, &samples)?;
    Ok(samples)
}

pub fn read_dataset_meta(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in BufReader::new(std::fs::File::open(root.join("dataset.meta"))?).lines() {
        let line = line?;
        if let Some((k, v)) = line.split_once('=') {
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(out)
}
