//! Exact k-nearest-neighbour search over a fixed point set.
//!
//! Results are ordered by distance with ties broken by ascending point
//! index, independent of tree shape. Sets smaller than
//! [`EXHAUSTIVE_BELOW`] are scanned directly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const EXHAUSTIVE_BELOW: usize = 64;
const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    /// Indexes `points`, a flat row-major array of `dim`-dimensional points.
    pub fn new(dim: usize, points: Vec<f64>) -> Self {
        assert!(dim > 0, "kd-tree dimension must be positive");
        assert_eq!(points.len() % dim, 0, "point array length must be a multiple of dim");
        let n = points.len() / dim;
        let mut tree = Self {
            dim,
            points,
            perm: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n >= EXHAUSTIVE_BELOW {
            tree.build(0, n);
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split along the axis of largest spread
        let dim = (0..self.dim)
            .max_by(|&a, &b| self.spread(start, end, a).total_cmp(&self.spread(start, end, b)))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let (points, d) = (&self.points, self.dim);
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * d + dim].total_cmp(&points[b * d + dim]).then(a.cmp(&b))
        });
        let value = self.points[self.perm[mid] * d + dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    fn spread(&self, start: usize, end: usize, axis: usize) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &self.perm[start..end] {
            let v = self.points[i * self.dim + axis];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat row-major coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    fn dist2(&self, i: usize, q: &[f64]) -> f64 {
        self.point(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// The `k` nearest points to `query` as `(index, distance)`, nearest
    /// first. Returns fewer than `k` entries only when the set is smaller.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<(usize, f64)> {
        assert_eq!(query.len(), self.dim, "query dimension mismatch");
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if self.nodes.is_empty() {
            for i in 0..self.len() {
                push_bounded(&mut heap, k, Candidate { dist2: self.dist2(i, query), index: i });
            }
        } else {
            self.search(0, query, k, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index, c.dist2.sqrt())).collect()
    }

    fn search(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    push_bounded(heap, k, Candidate { dist2: self.dist2(i, q), index: i });
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // `<=` keeps equal-distance points with smaller indices reachable
                if heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.dist2) {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn push_bounded(heap: &mut BinaryHeap<Candidate>, k: usize, c: Candidate) {
    if heap.len() < k {
        heap.push(c);
    } else if let Some(top) = heap.peek() {
        if c < *top {
            heap.pop();
            heap.push(c);
        }
    }
}
