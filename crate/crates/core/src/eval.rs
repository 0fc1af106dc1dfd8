//! Tour decoding from edge probabilities and the evaluation metrics.
//!
//! Decoding is a greedy masked walk: start at node 0 and repeatedly move to
//! the nearest unvisited node reachable over a predicted edge, falling back
//! to the nearest unvisited node overall when the prediction strands the
//! walk. The fallback makes decoding total: every probability matrix yields
//! a valid Hamiltonian cycle.
//!
//! Edge classification is scored over unordered off-diagonal pairs;
//! `evaluate` pools the counts across the test set (micro averaging) and the
//! per-instance report carries each graph's own F1.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledSample;
use crate::graph::{
    canonicalize, distance_matrix, tour_length, DistanceMatrix, GraphError, SymmetricAdjacency,
    Tour,
};
use crate::model::{coord_features, forward, init_adjacency, GlnParams, ModelError};
use crate::seeding::stream_rng;

const TAG_EVAL_A0: u64 = 0x6576_6130;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("reference length at index {idx} is not positive: {value}")]
    NonPositiveReference { idx: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Pair counts and the ratios derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeClassificationMetrics {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EdgeClassificationMetrics {
    fn from_counts(true_pos: usize, false_pos: usize, false_neg: usize, true_neg: usize) -> Self {
        let precision = if true_pos + false_pos > 0 {
            true_pos as f64 / (true_pos + false_pos) as f64
        } else {
            0.0
        };
        let recall = if true_pos + false_neg > 0 {
            true_pos as f64 / (true_pos + false_neg) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            true_pos,
            false_pos,
            false_neg,
            true_neg,
            precision,
            recall,
            f1,
        }
    }
}

/// Threshold the probabilities into an edge set: entry 1 iff `p > threshold`.
pub fn binarize(p: &Array2<f64>, threshold: f64) -> Result<SymmetricAdjacency, EvalError> {
    if p.nrows() != p.ncols() {
        return Err(EvalError::SizeMismatch {
            left: p.nrows(),
            right: p.ncols(),
        });
    }
    if !(0.0..1.0).contains(&threshold) || threshold <= 0.0 {
        return Err(EvalError::BadThreshold(threshold));
    }
    let n = p.nrows();
    let mut adj = SymmetricAdjacency::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if p[[i, j]] > threshold {
                adj.set(i, j, true);
            }
        }
    }
    Ok(adj)
}

/// Greedy masked walk over the predicted edges, nearest-by-distance,
/// visited nodes masked out; total thanks to the nearest-unvisited fallback.
/// Ties break to the lowest index.
pub fn greedy_decode(
    p: &Array2<f64>,
    d: &DistanceMatrix,
    threshold: f64,
) -> Result<Tour, EvalError> {
    let n = d.n();
    if p.dim() != (n, n) {
        return Err(EvalError::SizeMismatch {
            left: p.nrows(),
            right: n,
        });
    }
    if !(0.0..1.0).contains(&threshold) || threshold <= 0.0 {
        return Err(EvalError::BadThreshold(threshold));
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = 0usize;
    visited[0] = true;
    order.push(0);
    for _ in 1..n {
        let nearest = |predicted_only: bool| -> Option<usize> {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..n {
                if visited[j] || (predicted_only && p[[current, j]] <= threshold) {
                    continue;
                }
                let dist = d.get(current, j);
                if best.is_none_or(|(b, _)| dist < b) {
                    best = Some((dist, j));
                }
            }
            best.map(|(_, j)| j)
        };
        let next = nearest(true).or_else(|| nearest(false)).expect("unvisited node exists");
        visited[next] = true;
        order.push(next);
        current = next;
    }
    Ok(canonicalize(&order)?)
}

/// Pair-wise classification counts of a predicted edge set against the
/// ground truth.
pub fn edge_metrics(
    pred: &SymmetricAdjacency,
    truth: &SymmetricAdjacency,
) -> Result<EdgeClassificationMetrics, EvalError> {
    if pred.n() != truth.n() {
        return Err(EvalError::SizeMismatch {
            left: pred.n(),
            right: truth.n(),
        });
    }
    let n = pred.n();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            match (pred.get(i, j), truth.get(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    Ok(EdgeClassificationMetrics::from_counts(tp, fp, fn_, tn))
}

/// Arithmetic mean of tour lengths.
pub fn mean_tour_len(lengths: &[f64]) -> Result<f64, EvalError> {
    if lengths.is_empty() {
        return Err(EvalError::EmptyInput("length list"));
    }
    Ok(lengths.iter().sum::<f64>() / lengths.len() as f64)
}

/// Mean relative excess of predicted over reference lengths, as a ratio
/// (0.05 means 5%).
pub fn opt_gap(pred: &[f64], reference: &[f64]) -> Result<f64, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::EmptyInput("length list"));
    }
    if pred.len() != reference.len() {
        return Err(EvalError::SizeMismatch {
            left: pred.len(),
            right: reference.len(),
        });
    }
    let mut sum = 0.0;
    for (idx, (&p, &r)) in pred.iter().zip(reference).enumerate() {
        if r <= 0.0 {
            return Err(EvalError::NonPositiveReference { idx, value: r });
        }
        sum += p / r - 1.0;
    }
    Ok(sum / pred.len() as f64)
}

/// Evaluation settings: the binarization threshold and the seed for the
/// per-instance starting adjacencies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalConfig {
    pub threshold: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            seed: 0,
        }
    }
}

/// Aggregate test-set report; field order matches the serialized layout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub m: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub mean_tour_len: f64,
    pub opt_gap: f64,
    pub threshold: f64,
}

/// Per-instance evaluation row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InstanceEval {
    pub idx: usize,
    pub pred_len: f64,
    pub ref_len: f64,
    pub gap: f64,
    pub f1: f64,
}

/// CSV body for the per-instance rows.
pub fn instance_csv(rows: &[InstanceEval]) -> String {
    let mut out = String::from("idx,pred_len,ref_len,gap,f1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.idx, r.pred_len, r.ref_len, r.gap, r.f1
        ));
    }
    out
}

/// Run the model over a test set: forward, binarize, classify, decode, then
/// aggregate micro-averaged edge metrics and tour metrics.
pub fn evaluate(
    params: &GlnParams,
    samples: &[LabeledSample],
    config: &EvalConfig,
) -> Result<(EvalReport, Vec<InstanceEval>), EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput("test set"));
    }
    let n = params.config.n;
    for s in samples {
        if s.instance.n() != n {
            return Err(EvalError::Model(ModelError::NodeCountMismatch {
                expected: n,
                got: s.instance.n(),
            }));
        }
    }
    let probs: Vec<Array2<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(idx, sample)| {
            let a0 = init_adjacency(
                &params.config,
                &mut stream_rng(config.seed, &[TAG_EVAL_A0, idx as u64]),
            );
            let trace = forward(params, &coord_features(&sample.instance), &a0)?;
            Ok(trace.probs)
        })
        .collect::<Result<_, ModelError>>()?;
    evaluate_predictions(&probs, samples, config.threshold)
}

/// Aggregation core over precomputed probability matrices; lets callers and
/// tests inject predictions directly.
pub fn evaluate_predictions(
    probs: &[Array2<f64>],
    samples: &[LabeledSample],
    threshold: f64,
) -> Result<(EvalReport, Vec<InstanceEval>), EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput("test set"));
    }
    if probs.len() != samples.len() {
        return Err(EvalError::SizeMismatch {
            left: probs.len(),
            right: samples.len(),
        });
    }
    let n = samples[0].instance.n();

    struct PerSample {
        metrics: EdgeClassificationMetrics,
        pred_len: f64,
        ref_len: f64,
    }
    let rows: Vec<PerSample> = probs
        .par_iter()
        .zip(samples)
        .map(|(p, sample)| {
            let pred = binarize(p, threshold)?;
            let metrics = edge_metrics(&pred, &sample.target_adjacency)?;
            let d = distance_matrix(&sample.instance);
            let decoded = greedy_decode(p, &d, threshold)?;
            let pred_len = tour_length(&decoded, &d)?;
            Ok(PerSample {
                metrics,
                pred_len,
                ref_len: sample.ref_length,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for r in &rows {
        tp += r.metrics.true_pos;
        fp += r.metrics.false_pos;
        fn_ += r.metrics.false_neg;
        tn += r.metrics.true_neg;
    }
    let pooled = EdgeClassificationMetrics::from_counts(tp, fp, fn_, tn);
    let pred_lens: Vec<f64> = rows.iter().map(|r| r.pred_len).collect();
    let ref_lens: Vec<f64> = rows.iter().map(|r| r.ref_len).collect();

    let report = EvalReport {
        n,
        m: samples.len(),
        f1: pooled.f1,
        precision: pooled.precision,
        recall: pooled.recall,
        mean_tour_len: mean_tour_len(&pred_lens)?,
        opt_gap: opt_gap(&pred_lens, &ref_lens)?,
        threshold,
    };
    let instances = rows
        .iter()
        .enumerate()
        .map(|(idx, r)| InstanceEval {
            idx,
            pred_len: r.pred_len,
            ref_len: r.ref_len,
            gap: r.pred_len / r.ref_len - 1.0,
            f1: r.metrics.f1,
        })
        .collect();
    Ok((report, instances))
}
