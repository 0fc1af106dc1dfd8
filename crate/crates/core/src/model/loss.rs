//! Composite training loss over unordered off-diagonal node pairs.
//!
//! Two terms: a class-balanced binary cross-entropy that weights the sparse
//! edge class by the negative-class fraction, and a soft
//! intersection-over-union that compares the predicted edge mass against the
//! target edge set as a whole.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::graph::SymmetricAdjacency;
use crate::model::ModelError;

/// Loss weights and the probability clamp guarding the logarithms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the class-balanced cross-entropy term.
    pub hed_weight: f64,
    /// Weight of the soft IoU term.
    pub iou_weight: f64,
    /// Probabilities are clamped to `[clamp, 1 - clamp]` inside logs.
    pub clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            hed_weight: 1.0,
            iou_weight: 1.0,
            clamp: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hed_weight < 0.0 || self.iou_weight < 0.0 {
            return Err(ModelError::BadConfig("loss weights must be >= 0".into()));
        }
        if self.hed_weight + self.iou_weight <= 0.0 {
            return Err(ModelError::BadConfig(
                "at least one loss weight must be positive".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.clamp) || self.clamp <= 0.0 {
            return Err(ModelError::BadConfig(
                "probability clamp must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

fn check_pair(p: &Array2<f64>, target: &SymmetricAdjacency) -> Result<usize, ModelError> {
    let n = target.n();
    if p.dim() != (n, n) {
        return Err(ModelError::ShapeMismatch {
            expected: format!("({n}, {n})"),
            got: format!("{:?}", p.dim()),
        });
    }
    Ok(n)
}

/// Fraction of negative pairs; the weight put on the positive class.
fn negative_fraction(target: &SymmetricAdjacency) -> f64 {
    let n = target.n();
    let pairs = (n * (n - 1) / 2) as f64;
    let positives = target.edge_count() as f64;
    (pairs - positives) / pairs
}

/// Class-balanced cross-entropy, mean-reduced over unordered pairs:
/// positives weighted by the negative fraction and vice versa.
pub fn hed_loss(
    p: &Array2<f64>,
    target: &SymmetricAdjacency,
    config: &LossConfig,
) -> Result<f64, ModelError> {
    let n = check_pair(p, target)?;
    let beta = negative_fraction(target);
    let eps = config.clamp;
    let pairs = (n * (n - 1) / 2) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = p[[i, j]].clamp(eps, 1.0 - eps);
            if target.get(i, j) {
                sum -= beta * prob.ln();
            } else {
                sum -= (1.0 - beta) * (1.0 - prob).ln();
            }
        }
    }
    Ok(sum / pairs)
}

/// Soft IoU loss: one minus predicted-mass intersection over union with the
/// target edge set. Empty prediction against empty target is a perfect
/// match (0).
pub fn iou_loss(p: &Array2<f64>, target: &SymmetricAdjacency) -> Result<f64, ModelError> {
    let n = check_pair(p, target)?;
    let mut intersection = 0.0;
    let mut p_sum = 0.0;
    let mut t_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = p[[i, j]];
            let t = if target.get(i, j) { 1.0 } else { 0.0 };
            intersection += prob * t;
            p_sum += prob;
            t_sum += t;
        }
    }
    let union = p_sum + t_sum - intersection;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - intersection / union)
}

/// Weighted sum of the two terms.
pub fn total_loss(
    p: &Array2<f64>,
    target: &SymmetricAdjacency,
    config: &LossConfig,
) -> Result<f64, ModelError> {
    config.validate()?;
    Ok(config.hed_weight * hed_loss(p, target, config)?
        + config.iou_weight * iou_loss(p, target)?)
}

/// d(total loss)/dP as a symmetric matrix with zero diagonal. Entry (i, j)
/// holds the derivative with respect to the pair variable {i, j}; both
/// mirrored positions carry the same value.
pub(crate) fn loss_probs_grad(
    p: &Array2<f64>,
    target: &SymmetricAdjacency,
    config: &LossConfig,
) -> Result<Array2<f64>, ModelError> {
    let n = check_pair(p, target)?;
    let beta = negative_fraction(target);
    let eps = config.clamp;
    let pairs = (n * (n - 1) / 2) as f64;

    let mut intersection = 0.0;
    let mut p_sum = 0.0;
    let mut t_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let t = if target.get(i, j) { 1.0 } else { 0.0 };
            intersection += p[[i, j]] * t;
            p_sum += p[[i, j]];
            t_sum += t;
        }
    }
    let union = p_sum + t_sum - intersection;

    let mut grad = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = p[[i, j]];
            let mut g = 0.0;
            // Cross-entropy term; flat where the clamp is active.
            if prob > eps && prob < 1.0 - eps {
                g += config.hed_weight
                    * if target.get(i, j) {
                        -beta / prob
                    } else {
                        (1.0 - beta) / (1.0 - prob)
                    }
                    / pairs;
            }
            // Soft IoU term: d(1 - I/U) = (I dU - U dI) / U^2 with
            // dI = t, dU = 1 - t per pair.
            if union > 0.0 {
                let t = if target.get(i, j) { 1.0 } else { 0.0 };
                g += config.iou_weight * (intersection * (1.0 - t) - union * t)
                    / (union * union);
            }
            grad[[i, j]] = g;
            grad[[j, i]] = g;
        }
    }
    Ok(grad)
}
