//! Sparse shift operators induced by sampled group elements on a domain
//! sampling, built offline and stored as a bank.

mod io;

pub use io::{load_domain, read_meta};

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::interpolation::InterpScheme;
use crate::lie_groups::{GroupElement, LieGroupSpec, SamplingSet};
use crate::numerics::{Rng, SparseMatrix};
use crate::signal_domain::{DomainSampling, KdTree};

/// An operator together with the rows that needed the inverse-distance
/// fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltOperator {
    pub matrix: SparseMatrix,
    pub fallback_rows: Vec<usize>,
}

/// `T̂[i, n] = w` for the weights that interpolate domain point `xᵢ` from
/// the transformed points `g·X̂`, so that `(T̂ f)(xᵢ) ≈ f(g⁻¹ xᵢ)`.
pub fn build_operator(
    spec: &LieGroupSpec,
    g: &GroupElement,
    domain: &DomainSampling,
    scheme: InterpScheme,
) -> Result<BuiltOperator> {
    spec.check_element(g)?;
    check_dim(spec.kind().ambient_dim(), domain.dim())?;
    let scheme = scheme.resolve(domain.dim());
    let (n, d) = (domain.len(), domain.dim());
    let mut moved = vec![0.0; n * d];
    for (i, out) in moved.chunks_mut(d).enumerate() {
        spec.act(g, domain.point(i), out);
        domain.wrap(out);
    }
    let tree = KdTree::new(d, moved);
    let mut triplets = Vec::with_capacity(n * scheme.k());
    let mut fallback_rows = Vec::new();
    for i in 0..n {
        let r = scheme.interpolate(domain.point(i), &tree)?;
        if r.fallback {
            fallback_rows.push(i);
        }
        triplets.extend(
            r.indices
                .iter()
                .zip(&r.weights)
                .filter(|(_, &w)| w != 0.0)
                .map(|(&j, &w)| (i, j, w)),
        );
    }
    Ok(BuiltOperator {
        matrix: SparseMatrix::from_triplets(n, n, triplets)?,
        fallback_rows,
    })
}

/// Provenance recorded alongside a bank.
#[derive(Clone, Debug, PartialEq)]
pub struct BankMeta {
    pub interp: InterpScheme,
    pub seed: u64,
}

/// One operator per element of a sampling set, index-aligned with it.
#[derive(Clone, Debug)]
pub struct OperatorBank {
    set: Arc<SamplingSet>,
    domain: Arc<DomainSampling>,
    meta: BankMeta,
    operators: Vec<SparseMatrix>,
    fallback_rows: Vec<Vec<usize>>,
}

/// Builds every operator of `set` on `domain`, in parallel over elements.
/// The result does not depend on the thread count.
pub fn build_bank(
    set: Arc<SamplingSet>,
    domain: Arc<DomainSampling>,
    scheme: InterpScheme,
    seed: u64,
) -> Result<OperatorBank> {
    let scheme = scheme.resolve(domain.dim());
    let built: Vec<BuiltOperator> = set
        .elements()
        .par_iter()
        .map(|g| build_operator(set.spec(), g, &domain, scheme))
        .collect::<Result<_>>()?;
    let (operators, fallback_rows) = built.into_iter().map(|b| (b.matrix, b.fallback_rows)).unzip();
    OperatorBank::from_parts(set, domain, BankMeta { interp: scheme, seed }, operators, fallback_rows)
}

impl OperatorBank {
    pub fn from_parts(
        set: Arc<SamplingSet>,
        domain: Arc<DomainSampling>,
        meta: BankMeta,
        operators: Vec<SparseMatrix>,
        fallback_rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        check_dim(set.len(), operators.len())?;
        check_dim(set.len(), fallback_rows.len())?;
        let n = domain.len();
        if let Some(op) = operators.iter().find(|op| op.rows() != n || op.cols() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: op.rows().max(op.cols()),
            });
        }
        Ok(Self {
            set,
            domain,
            meta,
            operators,
            fallback_rows,
        })
    }

    pub fn set(&self) -> &SamplingSet {
        &self.set
    }

    pub fn set_arc(&self) -> Arc<SamplingSet> {
        Arc::clone(&self.set)
    }

    pub fn domain(&self) -> &DomainSampling {
        &self.domain
    }

    pub fn domain_arc(&self) -> Arc<DomainSampling> {
        Arc::clone(&self.domain)
    }

    pub fn meta(&self) -> &BankMeta {
        &self.meta
    }

    pub fn operators(&self) -> &[SparseMatrix] {
        &self.operators
    }

    pub fn operator(&self, i: usize) -> &SparseMatrix {
        &self.operators[i]
    }

    pub fn fallback_rows(&self, i: usize) -> &[usize] {
        &self.fallback_rows[i]
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback_rows.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.domain.len()
    }

    pub fn total_nnz(&self) -> usize {
        self.operators.iter().map(SparseMatrix::nnz).sum()
    }

    /// The same bank with every operator replaced by `f(index, operator)`.
    pub fn map_operators<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(usize, &SparseMatrix) -> Result<SparseMatrix> + Sync,
    {
        let operators = self
            .operators
            .par_iter()
            .enumerate()
            .map(|(i, op)| f(i, op))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            self.set_arc(),
            self.domain_arc(),
            self.meta.clone(),
            operators,
            self.fallback_rows.clone(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbMode {
    /// `Q₀ + T̂`
    AdditiveDiagonal,
    /// `(I + Q₀) T̂`
    Multiplicative,
}

impl std::fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PerturbMode::AdditiveDiagonal => "additive",
            PerturbMode::Multiplicative => "multiplicative",
        })
    }
}

impl FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" | "additive_diagonal" | "additive-diagonal" => Ok(PerturbMode::AdditiveDiagonal),
            "multiplicative" => Ok(PerturbMode::Multiplicative),
            _ => Err(Error::Parse(format!("unknown perturbation mode {s:?}"))),
        }
    }
}

/// Perturbs `op` with a diagonal `Q₀` whose entries are iid uniform on
/// `[-ε, ε]`.
pub fn perturb(op: &SparseMatrix, epsilon: f64, mode: PerturbMode, rng: &mut Rng) -> Result<SparseMatrix> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if !op.is_square() {
        return Err(invalid("perturbation needs a square operator"));
    }
    if epsilon == 0.0 {
        return Ok(op.clone());
    }
    let q: Vec<f64> = (0..op.rows()).map(|_| rng.uniform_in(-epsilon, epsilon)).collect();
    match mode {
        PerturbMode::AdditiveDiagonal => {
            let diag = SparseMatrix::from_triplets(op.rows(), op.cols(), q.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())?;
            op.add(&diag)
        }
        PerturbMode::Multiplicative => {
            let scale: Vec<f64> = q.iter().map(|v| 1.0 + v).collect();
            op.scale_rows(&scale)
        }
    }
}

/// Perturbs every operator of a bank with independent draws, one forked
/// stream per operator.
pub fn perturb_bank(bank: &OperatorBank, epsilon: f64, mode: PerturbMode, rng: &Rng) -> Result<OperatorBank> {
    bank.map_operators(|i, op| perturb(op, epsilon, mode, &mut rng.fork(i as u64)))
}

#[cfg(test)]
mod tests;
