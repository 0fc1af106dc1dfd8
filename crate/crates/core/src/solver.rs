//! Exact and heuristic TSP solvers.
//!
//! `solve_held_karp` is the exact labeler for every size we train at
//! (n <= 22); `solve_brute_force` is its independent oracle for small n.
//! The constructive heuristics reproduce the classic non-learned baselines:
//! nearest neighbor and the nearest/random/farthest insertion family, plus
//! 2-opt refinement used to label instances too large for exact solving.
//!
//! All solvers are stateless over immutable inputs and tie-break by lowest
//! node index, so results are deterministic given the matrix (and the
//! caller-supplied generator for random insertion).

use itertools::Itertools;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{canonicalize, tour_length, DistanceMatrix, GraphError, Tour};

/// Largest instance brute force will enumerate: (n-1)!/2 tours.
pub const BRUTE_FORCE_MAX_N: usize = 10;
/// Largest instance the subset DP will attempt; bounded by its
/// O(n 2^n) table.
pub const HELD_KARP_MAX_N: usize = 22;
/// Default cap on the Held-Karp table allocation.
pub const HELD_KARP_DEFAULT_MEMORY: usize = 2 << 30;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("n={n} outside supported range {min}..={max}")]
    SizeOutOfRange { n: usize, min: usize, max: usize },
    #[error("Held-Karp table would need {required} bytes, cap is {cap}")]
    MemoryCapExceeded { required: usize, cap: usize },
    #[error("random insertion requires a generator")]
    MissingRng,
    #[error("start index {start} out of range for n={n}")]
    BadStart { start: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Which algorithm produced a tour; recorded next to dataset labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    BruteForce,
    HeldKarp,
    NearestNeighbor,
    NearestInsertion,
    RandomInsertion,
    FarthestInsertion,
    TwoOptRefined,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverKind::BruteForce => "brute_force",
            SolverKind::HeldKarp => "held_karp",
            SolverKind::NearestNeighbor => "nearest_neighbor",
            SolverKind::NearestInsertion => "nearest_insertion",
            SolverKind::RandomInsertion => "random_insertion",
            SolverKind::FarthestInsertion => "farthest_insertion",
            SolverKind::TwoOptRefined => "two_opt_refined",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brute_force" => Ok(SolverKind::BruteForce),
            "held_karp" => Ok(SolverKind::HeldKarp),
            "nearest_neighbor" => Ok(SolverKind::NearestNeighbor),
            "nearest_insertion" => Ok(SolverKind::NearestInsertion),
            "random_insertion" => Ok(SolverKind::RandomInsertion),
            "farthest_insertion" => Ok(SolverKind::FarthestInsertion),
            "two_opt_refined" => Ok(SolverKind::TwoOptRefined),
            other => Err(format!("unknown solver '{other}'")),
        }
    }
}

/// City-selection rule for the insertion heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertionRule {
    Nearest,
    Random,
    Farthest,
}

/// Globally optimal tour by exhaustive enumeration of all (n-1)!/2 distinct
/// cycles; ties broken by lexicographically smallest canonical order.
pub fn solve_brute_force(d: &DistanceMatrix) -> Result<Tour, SolverError> {
    let n = d.n();
    if !(3..=BRUTE_FORCE_MAX_N).contains(&n) {
        return Err(SolverError::SizeOutOfRange {
            n,
            min: 3,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut order = vec![0; n];
    for perm in (1..n).permutations(n - 1) {
        // Canonical form demands order[1] < order[n-1]; skipping the mirror
        // image halves the enumeration.
        if perm[0] > perm[n - 2] {
            continue;
        }
        order[1..].copy_from_slice(&perm);
        let mut len = d.get(0, order[1]);
        for w in order[1..].windows(2) {
            len += d.get(w[0], w[1]);
        }
        len += d.get(order[n - 1], 0);
        // Lexicographic enumeration order makes the first strict minimum the
        // smallest canonical order among ties.
        if best.as_ref().is_none_or(|(b, _)| len < *b) {
            best = Some((len, order.clone()));
        }
    }
    let (_, order) = best.expect("at least one tour exists for n >= 3");
    Ok(canonicalize(&order)?)
}

fn held_karp_table_bytes(n: usize) -> usize {
    let masks = 1usize << (n - 1);
    // f32 cost plus u8 predecessor per (mask, end) state.
    masks * (n - 1) * (4 + 1)
}

/// Globally optimal tour by dynamic programming over vertex subsets,
/// O(n^2 2^n) time and O(n 2^n) memory. Costs are stored as f32 and
/// accumulated in f64, keeping the error below 1e-6 at n <= 22.
pub fn solve_held_karp(d: &DistanceMatrix) -> Result<Tour, SolverError> {
    solve_held_karp_with_cap(d, HELD_KARP_DEFAULT_MEMORY)
}

/// [`solve_held_karp`] with an explicit cap on table memory.
pub fn solve_held_karp_with_cap(d: &DistanceMatrix, cap: usize) -> Result<Tour, SolverError> {
    let n = d.n();
    if !(3..=HELD_KARP_MAX_N).contains(&n) {
        return Err(SolverError::SizeOutOfRange {
            n,
            min: 3,
            max: HELD_KARP_MAX_N,
        });
    }
    let required = held_karp_table_bytes(n);
    if required > cap {
        return Err(SolverError::MemoryCapExceeded { required, cap });
    }

    // Node 0 is the fixed start; bit i of a mask stands for node i + 1.
    let m = n - 1;
    let masks = 1usize << m;
    let mut cost = vec![f32::INFINITY; masks * m];
    let mut pred = vec![0u8; masks * m];

    for k in 0..m {
        cost[(1 << k) * m + k] = d.get(0, k + 1) as f32;
    }
    for mask in 1..masks {
        if mask.count_ones() < 2 {
            continue;
        }
        for k in 0..m {
            if mask & (1 << k) == 0 {
                continue;
            }
            let prev_mask = mask & !(1 << k);
            let mut best = f64::INFINITY;
            let mut best_pred = 0u8;
            let mut rest = prev_mask;
            while rest != 0 {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let c = cost[prev_mask * m + j] as f64 + d.get(j + 1, k + 1);
                if c < best {
                    best = c;
                    best_pred = j as u8;
                }
            }
            cost[mask * m + k] = best as f32;
            pred[mask * m + k] = best_pred;
        }
    }

    let full = masks - 1;
    let mut best = f64::INFINITY;
    let mut last = 0usize;
    for k in 0..m {
        let c = cost[full * m + k] as f64 + d.get(k + 1, 0);
        if c < best {
            best = c;
            last = k;
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    let mut k = last;
    while mask != 0 {
        order.push(k + 1);
        let p = pred[mask * m + k] as usize;
        mask &= !(1 << k);
        k = p;
    }
    order.push(0);
    order.reverse();
    Ok(canonicalize(&order)?)
}

/// Greedy construction: from the current node, always move to the nearest
/// unvisited node (ties to the lowest index), then close the cycle.
pub fn nearest_neighbor(d: &DistanceMatrix, start: usize) -> Result<Tour, SolverError> {
    let n = d.n();
    if start >= n {
        return Err(SolverError::BadStart { start, n });
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    visited[start] = true;
    order.push(start);
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..n {
            if !visited[j] && d.get(current, j) < best {
                best = d.get(current, j);
                next = j;
            }
        }
        visited[next] = true;
        order.push(next);
        current = next;
    }
    Ok(canonicalize(&order)?)
}

/// Grow a tour from the globally shortest edge, repeatedly picking the next
/// city by `rule` and inserting it at the position of least length increase.
///
/// A generator is consulted only for [`InsertionRule::Random`].
pub fn insertion_heuristic(
    d: &DistanceMatrix,
    rule: InsertionRule,
    rng: Option<&mut dyn RngCore>,
) -> Result<Tour, SolverError> {
    let (a, b) = shortest_edge(d, 0);
    insertion_from_edge(d, rule, rng, a, b)
}

/// k-th shortest undirected edge (ties by lexicographic pair order).
fn shortest_edge(d: &DistanceMatrix, k: usize) -> (usize, usize) {
    let n = d.n();
    let mut edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    edges.sort_by(|&(a, b), &(c, e)| {
        d.get(a, b)
            .partial_cmp(&d.get(c, e))
            .expect("finite distances")
            .then((a, b).cmp(&(c, e)))
    });
    edges[k.min(edges.len() - 1)]
}

fn insertion_from_edge(
    d: &DistanceMatrix,
    rule: InsertionRule,
    mut rng: Option<&mut dyn RngCore>,
    a: usize,
    b: usize,
) -> Result<Tour, SolverError> {
    if rule == InsertionRule::Random && rng.is_none() {
        return Err(SolverError::MissingRng);
    }
    let n = d.n();
    let mut tour = vec![a, b];
    let mut in_tour = vec![false; n];
    in_tour[a] = true;
    in_tour[b] = true;
    // Distance from each city to its closest tour node, kept incrementally.
    let mut to_tour: Vec<f64> = (0..n).map(|c| d.get(c, a).min(d.get(c, b))).collect();

    while tour.len() < n {
        let remaining: Vec<usize> = (0..n).filter(|&c| !in_tour[c]).collect();
        let city = match rule {
            InsertionRule::Nearest => remaining
                .iter()
                .copied()
                .min_by(|&x, &y| to_tour[x].partial_cmp(&to_tour[y]).unwrap().then(x.cmp(&y)))
                .unwrap(),
            InsertionRule::Farthest => remaining
                .iter()
                .copied()
                .min_by(|&x, &y| to_tour[y].partial_cmp(&to_tour[x]).unwrap().then(x.cmp(&y)))
                .unwrap(),
            InsertionRule::Random => {
                let rng = rng.as_mut().expect("checked above");
                remaining[rng.random_range(0..remaining.len())]
            }
        };

        let mut best_pos = 0;
        let mut best_delta = f64::INFINITY;
        for i in 0..tour.len() {
            let u = tour[i];
            let v = tour[(i + 1) % tour.len()];
            let delta = d.get(u, city) + d.get(city, v) - d.get(u, v);
            if delta < best_delta {
                best_delta = delta;
                best_pos = i;
            }
        }
        tour.insert(best_pos + 1, city);
        in_tour[city] = true;
        for c in 0..n {
            if !in_tour[c] {
                to_tour[c] = to_tour[c].min(d.get(c, city));
            }
        }
    }
    Ok(canonicalize(&tour)?)
}

/// Repeatedly apply the best improving 2-edge exchange until none remains.
/// The result is never longer than the input.
pub fn two_opt_refine(tour: &Tour, d: &DistanceMatrix) -> Result<Tour, SolverError> {
    if tour.n() != d.n() {
        return Err(SolverError::Graph(GraphError::DimensionMismatch {
            tour: tour.n(),
            matrix: d.n(),
        }));
    }
    let n = tour.n();
    let mut order = tour.order().to_vec();
    loop {
        let mut best_gain = 1e-12;
        let mut best = None;
        for i in 0..(n - 1) {
            for j in (i + 1)..n {
                let a = order[i];
                let b = order[(i + 1) % n];
                let c = order[j];
                let e = order[(j + 1) % n];
                if a == c || b == e {
                    continue;
                }
                let gain = d.get(a, b) + d.get(c, e) - d.get(a, c) - d.get(b, e);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some((i, j));
                }
            }
        }
        match best {
            Some((i, j)) => order[(i + 1)..=j].reverse(),
            None => break,
        }
    }
    Ok(canonicalize(&order)?)
}

/// Heuristic labeler for instances beyond the exact-DP range: best of
/// `starts` farthest-insertion runs seeded from the shortest edges, each
/// refined with 2-opt.
pub fn heuristic_label_tour(d: &DistanceMatrix, starts: usize) -> Result<Tour, SolverError> {
    let n = d.n();
    let max_starts = (n * (n - 1) / 2).min(starts.max(1));
    let mut best: Option<(f64, Tour)> = None;
    for s in 0..max_starts {
        let (a, b) = shortest_edge(d, s);
        let tour = insertion_from_edge(d, InsertionRule::Farthest, None, a, b)?;
        let tour = two_opt_refine(&tour, d)?;
        let len = tour_length(&tour, d)?;
        if best.as_ref().is_none_or(|(b, _)| len < *b) {
            best = Some((len, tour));
        }
    }
    Ok(best.expect("at least one start").1)
}
