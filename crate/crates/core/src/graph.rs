//! Fundamental TSP graph types: instances, tours, adjacency and distance
//! matrices, plus the arithmetic connecting them.
//!
//! All types are immutable after construction and safe to share across
//! threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("instance needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("coordinate {value} of node {node} lies outside [0, 1]")]
    CoordinateOutOfRange { node: usize, value: f64 },
    #[error("order of length {0} is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("tour has {tour} nodes but matrix has {matrix}")]
    DimensionMismatch { tour: usize, matrix: usize },
}

/// A Euclidean TSP instance: `n >= 3` points in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspInstance {
    coords: Vec<[f64; 2]>,
}

impl TspInstance {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self, GraphError> {
        if coords.len() < 3 {
            return Err(GraphError::TooFewNodes(coords.len()));
        }
        for (node, c) in coords.iter().enumerate() {
            for &value in c {
                if !(0.0..=1.0).contains(&value) {
                    return Err(GraphError::CoordinateOutOfRange { node, value });
                }
            }
        }
        Ok(Self { coords })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
}

/// A Hamiltonian cycle in canonical form: `order[0] == 0` and
/// `order[1] < order[n-1]`, which fixes rotation and direction so that
/// equal cycles compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tour {
    order: Vec<usize>,
}

impl Tour {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    /// Consecutive node pairs including the closing edge back to the start.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.order.len();
        (0..n).map(move |i| (self.order[i], self.order[(i + 1) % n]))
    }
}

/// Validate a raw permutation and bring it into canonical form. Rotation and
/// reflection never change tour length.
pub fn canonicalize(order: &[usize]) -> Result<Tour, GraphError> {
    let n = order.len();
    if n < 3 {
        return Err(GraphError::NotAPermutation(n));
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n || seen[v] {
            return Err(GraphError::NotAPermutation(n));
        }
        seen[v] = true;
    }
    let start = order.iter().position(|&v| v == 0).expect("0 is present");
    let mut rotated: Vec<usize> = Vec::with_capacity(n);
    rotated.extend_from_slice(&order[start..]);
    rotated.extend_from_slice(&order[..start]);
    if rotated[1] > rotated[n - 1] {
        rotated[1..].reverse();
    }
    Ok(Tour { order: rotated })
}

/// Dense symmetric 0/1 matrix with zero diagonal; the edge set of an
/// undirected graph on `n` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetricAdjacency {
    n: usize,
    bits: Vec<bool>,
}

impl SymmetricAdjacency {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Set both `(i, j)` and `(j, i)`. The diagonal stays zero.
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if i == j {
            return;
        }
        self.bits[i * self.n + j] = value;
        self.bits[j * self.n + i] = value;
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.get(i, j)).count()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count() / 2
    }
}

/// Euclidean distances between every node pair: symmetric, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Pairwise Euclidean distances of an instance.
pub fn distance_matrix(instance: &TspInstance) -> DistanceMatrix {
    let n = instance.n();
    let coords = instance.coords();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let d = (dx * dx + dy * dy).sqrt();
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { n, values }
}

/// Total cycle length of a tour, closing edge included.
pub fn tour_length(tour: &Tour, d: &DistanceMatrix) -> Result<f64, GraphError> {
    if tour.n() != d.n() {
        return Err(GraphError::DimensionMismatch {
            tour: tour.n(),
            matrix: d.n(),
        });
    }
    Ok(tour.edges().map(|(a, b)| d.get(a, b)).sum())
}

/// Edge set of a tour as an adjacency matrix; every node ends up with
/// degree exactly 2.
pub fn tour_to_adjacency(tour: &Tour) -> SymmetricAdjacency {
    let mut adj = SymmetricAdjacency::zeros(tour.n());
    for (a, b) in tour.edges() {
        adj.set(a, b, true);
    }
    adj
}
