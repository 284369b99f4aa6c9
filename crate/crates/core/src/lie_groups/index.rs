//! Near-duplicate lookup for group elements.
//!
//! Elements are keyed by a fixed unit linear functional of their matrix
//! entries. For every supported group the Frobenius distance between two
//! representation matrices is at most `√2` times their geodesic distance,
//! so all elements within geodesic distance `tol` of a query have keys in
//! a window of half-width `√2·tol` around the query key.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::numerics::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug)]
pub struct ElementIndex {
    weights: Vec<f64>,
    buckets: BTreeMap<Key, Vec<usize>>,
}

impl ElementIndex {
    pub fn new(rep_dim: usize) -> Self {
        let mut weights: Vec<f64> = (0..rep_dim * rep_dim)
            .map(|j| (1.7 * j as f64 + 0.3).sin() + 0.05)
            .collect();
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        weights.iter_mut().for_each(|w| *w /= norm);
        Self {
            weights,
            buckets: BTreeMap::new(),
        }
    }

    fn key(&self, g: &DenseMatrix) -> f64 {
        g.data().iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn insert(&mut self, g: &DenseMatrix, id: usize) {
        let k = self.key(g);
        self.buckets.entry(Key(k)).or_default().push(id);
    }

    /// Ids whose key lies close enough that the element may be within `tol`.
    pub fn candidates(&self, g: &DenseMatrix, tol: f64) -> Vec<usize> {
        let k = self.key(g);
        let half = std::f64::consts::SQRT_2 * tol * (1.0 + 1e-9) + 1e-12 * (1.0 + k.abs());
        self.buckets
            .range(Key(k - half)..=Key(k + half))
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect()
    }
}
