//! Lie algebra generators and exponential-map sampling sets.
//!
//! A base set collects `exp(δ n X)` for every generator `X` and every step
//! `n ∈ [-N, N]`. Its monomial extension of order `k` adds all products of
//! up to `k` base elements, enumerated breadth-first (each new level
//! right-multiplies the previous level's new elements by every base element)
//! and deduplicated under the group's geodesic distance.

mod covering;
mod index;
mod io;

pub use covering::{
    bandwidth_sweep, covering_radius, so2_covering_radius_exact, so2_probes, so3_probes, BandwidthRow,
    DEFAULT_PROBE_COUNT,
};
pub use index::ElementIndex;

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, invalid, Error, Result};
use crate::numerics::{mat_exp, DenseMatrix};

/// Default tolerance under which two group elements are treated as equal.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-9;

/// Group elements are stored as their matrix representation.
pub type GroupElement = DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKind {
    So2,
    So3,
    /// Translations of `ℝᵈ`, represented as `(d+1)x(d+1)` homogeneous matrices.
    Translation(usize),
}

impl GroupKind {
    pub fn generator_count(self) -> usize {
        match self {
            GroupKind::So2 => 1,
            GroupKind::So3 => 3,
            GroupKind::Translation(d) => d,
        }
    }

    /// Dimension of the space the group acts on.
    pub fn ambient_dim(self) -> usize {
        match self {
            GroupKind::So2 => 2,
            GroupKind::So3 => 3,
            GroupKind::Translation(d) => d,
        }
    }

    /// Size of the matrix representation.
    pub fn rep_dim(self) -> usize {
        match self {
            GroupKind::So2 => 2,
            GroupKind::So3 => 3,
            GroupKind::Translation(d) => d + 1,
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::So2 => write!(f, "so2"),
            GroupKind::So3 => write!(f, "so3"),
            GroupKind::Translation(d) => write!(f, "t{d}"),
        }
    }
}

impl FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "so2" => Ok(GroupKind::So2),
            "so3" => Ok(GroupKind::So3),
            other => other
                .strip_prefix('t')
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| (1..=7).contains(&d))
                .map(GroupKind::Translation)
                .ok_or_else(|| Error::Parse(format!("unknown group kind {s:?} (so2, so3, t1..t7)"))),
        }
    }
}

/// A matrix Lie group together with a basis of its Lie algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct LieGroupSpec {
    kind: GroupKind,
    generators: Vec<DenseMatrix>,
}

impl LieGroupSpec {
    pub fn new(kind: GroupKind, generators: Vec<DenseMatrix>) -> Result<Self> {
        if generators.len() != kind.generator_count() {
            return Err(invalid(format!(
                "{kind} needs {} generators, got {}",
                kind.generator_count(),
                generators.len()
            )));
        }
        let n = kind.rep_dim();
        for (i, g) in generators.iter().enumerate() {
            if g.rows() != n || g.cols() != n {
                return Err(invalid(format!("generator {i} of {kind} must be {n}x{n}")));
            }
            let in_algebra = match kind {
                GroupKind::So2 | GroupKind::So3 => g.is_skew_symmetric(1e-14),
                // zero everywhere except the translation column
                GroupKind::Translation(d) => {
                    (0..n).all(|r| (0..n).all(|c| c == d && r < d || g[(r, c)] == 0.0))
                }
            };
            if !in_algebra {
                return Err(invalid(format!("generator {i} is not in the Lie algebra of {kind}")));
            }
        }
        Ok(Self { kind, generators })
    }

    /// `so(2)` spanned by `[[0, -1], [1, 0]]`.
    pub fn so2() -> Self {
        let x = DenseMatrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]).expect("2x2");
        Self::new(GroupKind::So2, vec![x]).expect("valid so(2) basis")
    }

    /// `so(3)` spanned by the infinitesimal rotations about x, y and z.
    pub fn so3() -> Self {
        let mut gens = Vec::with_capacity(3);
        for axis in 0..3 {
            let mut g = DenseMatrix::zeros(3, 3);
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            g[(b, a)] = 1.0;
            g[(a, b)] = -1.0;
            gens.push(g);
        }
        Self::new(GroupKind::So3, gens).expect("valid so(3) basis")
    }

    /// Unit translations along each axis of `ℝᵈ`.
    pub fn translation(d: usize) -> Result<Self> {
        if d == 0 || d + 1 > crate::numerics::MAX_EXP_DIM {
            return Err(invalid(format!("translation dimension must be in 1..=7, got {d}")));
        }
        let gens = (0..d)
            .map(|i| {
                let mut g = DenseMatrix::zeros(d + 1, d + 1);
                g[(i, d)] = 1.0;
                g
            })
            .collect();
        Self::new(GroupKind::Translation(d), gens)
    }

    pub fn from_kind(kind: GroupKind) -> Result<Self> {
        match kind {
            GroupKind::So2 => Ok(Self::so2()),
            GroupKind::So3 => Ok(Self::so3()),
            GroupKind::Translation(d) => Self::translation(d),
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn generators(&self) -> &[DenseMatrix] {
        &self.generators
    }

    pub fn identity(&self) -> GroupElement {
        DenseMatrix::identity(self.kind.rep_dim())
    }

    /// `exp(t X_i)`.
    pub fn exp(&self, generator: usize, t: f64) -> Result<GroupElement> {
        let g = self
            .generators
            .get(generator)
            .ok_or_else(|| invalid(format!("generator index {generator} out of range")))?;
        mat_exp(g, t)
    }

    pub fn check_element(&self, g: &GroupElement) -> Result<()> {
        let n = self.kind.rep_dim();
        check_dim(n, g.rows())?;
        check_dim(n, g.cols())
    }

    /// Applies `g` to a point of the ambient space.
    pub fn act(&self, g: &GroupElement, x: &[f64], out: &mut [f64]) {
        let d = self.kind.ambient_dim();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        let rep = self.kind.rep_dim();
        let m = g.data();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &m[r * rep..r * rep + d];
            let mut acc: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            if let GroupKind::Translation(_) = self.kind {
                acc += m[r * rep + d];
            }
            *o = acc;
        }
    }

    /// Geodesic distance between two elements: the wrapped angle difference
    /// on SO(2), the rotation angle of `aᵀb` on SO(3), the Euclidean distance
    /// of the translation vectors on `ℝᵈ`.
    pub fn geodesic_distance(&self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        self.check_element(a)?;
        self.check_element(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    pub(crate) fn distance_unchecked(&self, a: &GroupElement, b: &GroupElement) -> f64 {
        let (x, y) = (a.data(), b.data());
        match self.kind {
            GroupKind::So2 => {
                // relative rotation aᵀb
                let c = x[0] * y[0] + x[2] * y[2];
                let s = x[0] * y[2] - x[2] * y[0];
                s.atan2(c).abs()
            }
            GroupKind::So3 => {
                let r = |i: usize, j: usize| (0..3).map(|k| x[k * 3 + i] * y[k * 3 + j]).sum::<f64>();
                let tr = r(0, 0) + r(1, 1) + r(2, 2);
                let v = [r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)];
                let sin = 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                let cos = 0.5 * (tr - 1.0);
                sin.atan2(cos)
            }
            GroupKind::Translation(d) => {
                let rep = d + 1;
                (0..d)
                    .map(|i| {
                        let t = x[i * rep + d] - y[i * rep + d];
                        t * t
                    })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

/// One factor `exp(δ n X_generator)` of a monomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Factor {
    pub generator: usize,
    pub step: i64,
}

/// The product of base factors that produced a sampled element; the empty
/// word is the identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Word(pub Vec<Factor>);

impl Word {
    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for (i, fac) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", fac.generator, fac.step)?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "e" {
            return Ok(Word::default());
        }
        s.split(',')
            .map(|tok| {
                let (g, n) = tok
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("bad word factor {tok:?}")))?;
                Ok(Factor {
                    generator: g.parse().map_err(|_| Error::Parse(format!("bad generator {g:?}")))?,
                    step: n.parse().map_err(|_| Error::Parse(format!("bad step {n:?}")))?,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

/// Sampling parameters recorded with a set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingParams {
    pub delta: f64,
    pub range_steps: usize,
    pub order: usize,
    pub dedup_tol: f64,
}

/// A finite subset of a Lie group with per-element provenance.
#[derive(Clone, Debug)]
pub struct SamplingSet {
    spec: LieGroupSpec,
    params: SamplingParams,
    elements: Vec<GroupElement>,
    words: Vec<Word>,
    index: ElementIndex,
}

impl SamplingSet {
    /// Collects explicit elements, dropping any within `dedup_tol` of an
    /// earlier one. Provenance words are taken from `words` when given.
    pub fn from_elements(
        spec: LieGroupSpec,
        params: SamplingParams,
        elements: Vec<GroupElement>,
        words: Option<Vec<Word>>,
    ) -> Result<Self> {
        if !(params.dedup_tol >= 0.0) {
            return Err(invalid("dedup tolerance must be nonnegative"));
        }
        if let Some(w) = &words {
            check_dim(elements.len(), w.len())?;
        }
        let mut set = Self {
            index: ElementIndex::new(spec.kind().rep_dim()),
            spec,
            params,
            elements: Vec::with_capacity(elements.len()),
            words: Vec::with_capacity(elements.len()),
        };
        let mut words = words.map(|w| w.into_iter());
        for e in elements {
            set.spec.check_element(&e)?;
            let word = words.as_mut().and_then(|w| w.next()).unwrap_or_default();
            set.try_insert(e, word);
        }
        Ok(set)
    }

    /// Inserts `g` unless an element within the dedup tolerance is already
    /// present. Returns whether it was inserted.
    fn try_insert(&mut self, g: GroupElement, word: Word) -> bool {
        if self.find_within(&g, self.params.dedup_tol).is_some() {
            return false;
        }
        self.index.insert(&g, self.elements.len());
        self.elements.push(g);
        self.words.push(word);
        true
    }

    pub fn spec(&self) -> &LieGroupSpec {
        &self.spec
    }

    pub fn params(&self) -> SamplingParams {
        self.params
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Index of the closest element within `tol` of `g`.
    pub fn find_within(&self, g: &GroupElement, tol: f64) -> Option<usize> {
        self.index
            .candidates(g, tol)
            .into_iter()
            .map(|i| (i, self.spec.distance_unchecked(g, &self.elements[i])))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    /// Index of the element equal to `g` up to the set's dedup tolerance.
    pub fn find(&self, g: &GroupElement) -> Option<usize> {
        self.find_within(g, self.params.dedup_tol.max(1e-12))
    }

    pub fn identity_index(&self) -> Option<usize> {
        self.find(&self.spec.identity())
    }
}

/// Builds `{ exp(δ n X) : X in the basis, n in [-N, N] }`.
///
/// The identity comes first, then generators in index order with steps
/// ascending. Elements closer than [`DEFAULT_DEDUP_TOL`] to an earlier one
/// (possible when `Nδ` wraps around a compact group) are dropped.
pub fn sample_base(spec: &LieGroupSpec, delta: f64, range_steps: usize) -> Result<SamplingSet> {
    sample_base_with_tol(spec, delta, range_steps, DEFAULT_DEDUP_TOL)
}

pub fn sample_base_with_tol(spec: &LieGroupSpec, delta: f64, range_steps: usize, dedup_tol: f64) -> Result<SamplingSet> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid(format!("resolution must be positive, got {delta}")));
    }
    if range_steps == 0 {
        return Err(invalid("range step count N must be at least 1"));
    }
    let n = range_steps as i64;
    let mut elements = vec![spec.identity()];
    let mut words = vec![Word::default()];
    for generator in 0..spec.generators().len() {
        for step in (-n..=n).filter(|&s| s != 0) {
            elements.push(spec.exp(generator, delta * step as f64)?);
            words.push(Word(vec![Factor { generator, step }]));
        }
    }
    let params = SamplingParams {
        delta,
        range_steps,
        order: 1,
        dedup_tol,
    };
    SamplingSet::from_elements(spec.clone(), params, elements, Some(words))
}

/// Extends a base set with all monomials of up to `order` base factors.
pub fn extend_monomials(base: &SamplingSet, order: usize, dedup_tol: f64) -> Result<SamplingSet> {
    if !(dedup_tol >= 0.0) {
        return Err(invalid(format!("dedup tolerance must be nonnegative, got {dedup_tol}")));
    }
    if order == 0 {
        return Err(invalid("monomial order must be at least 1"));
    }
    if base.params.order != 1 {
        return Err(invalid("monomial extension needs a base set of order 1"));
    }
    let params = SamplingParams {
        order,
        dedup_tol,
        ..base.params
    };
    let mut set = SamplingSet::from_elements(
        base.spec.clone(),
        params,
        base.elements.clone(),
        Some(base.words.clone()),
    )?;
    let factors: Vec<usize> = (0..base.len()).filter(|&i| !base.words[i].is_identity()).collect();

    let mut frontier: Vec<usize> = (0..set.len()).filter(|&i| !set.words[i].is_identity()).collect();
    for _level in 2..=order {
        let mut next = Vec::new();
        for &parent in &frontier {
            for &f in &factors {
                let g = set.elements[parent].matmul(&base.elements[f])?;
                let mut word = set.words[parent].clone();
                word.0.extend_from_slice(&base.words[f].0);
                if set.try_insert(g, word) {
                    next.push(set.len() - 1);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(set)
}

/// `Ĝ^k_{δ,N}` in one call.
pub fn sample_group(spec: &LieGroupSpec, delta: f64, range_steps: usize, order: usize, dedup_tol: f64) -> Result<SamplingSet> {
    let base = sample_base_with_tol(spec, delta, range_steps, dedup_tol)?;
    if order == 1 {
        return Ok(base);
    }
    extend_monomials(&base, order, dedup_tol)
}
