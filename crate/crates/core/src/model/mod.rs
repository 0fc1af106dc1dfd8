//! The Graph Learning Network edge predictor.
//!
//! One model is bound to a fixed node count `n` (its pairwise mixing matrix
//! is n-by-n). A forward pass runs `layer_count` recurrent blocks; each block
//! convolves node features through `kernel_count` graph kernels, merges them
//! into local and global embeddings, and scores every node pair to produce
//! the next adjacency. The final scores, squashed through a logistic and
//! symmetrized, are the predicted edge probabilities.
//!
//! Gradients are hand-derived for exactly this architecture; see
//! [`backward`]. The full forward trace is retained for that purpose.

mod backward;
mod checkpoint;
mod loss;
mod optim;
mod train;

pub use backward::backward;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{hed_loss, iou_loss, total_loss, LossConfig};
pub use optim::{adam_step, AdamState, TrainConfig};
pub use train::{train, EpochStats};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::graph::TspInstance;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("expected shape {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("model is bound to n={expected} nodes, input has {got}")]
    NodeCountMismatch { expected: usize, got: usize },
    #[error("non-finite value produced in layer {layer}")]
    NonFinite { layer: usize },
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// How the starting adjacency is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Random symmetric binary matrix with edge probability `init_edge_prob`.
    Aleatory,
    /// The identity matrix.
    Identity,
}

/// Whether kernel products see a degree-normalized adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyNormalization {
    /// D^(-1/2) (A + I) D^(-1/2) with D the row-sum degrees of A + I.
    Symmetric,
    /// Use the adjacency as-is.
    Raw,
}

/// How a block's symmetrized pair scores become the next block's adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRecurrence {
    /// Rectified scores, taken literally: entries that fall to zero stop
    /// carrying gradient and the mixing can die off irreversibly.
    Rectified,
    /// Logistic of the scores, matching how the final prediction is read;
    /// keeps the recurrence differentiable everywhere.
    Logistic,
}

/// Architecture hyper-parameters. The model serves exactly one instance
/// size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlnConfig {
    pub n: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub kernel_count: usize,
    pub layer_count: usize,
    pub init_edge_prob: f64,
    pub init_mode: InitMode,
    pub adjacency_normalization: AdjacencyNormalization,
    pub score_recurrence: ScoreRecurrence,
}

impl GlnConfig {
    /// Defaults for planar instances of `n` nodes: 2 input features, hidden
    /// width 32, 3 kernels, 3 recurrent layers, starting edge probability
    /// 2/n (the expected tour degree is 2).
    pub fn for_nodes(n: usize) -> Self {
        Self {
            n,
            input_dim: 2,
            hidden_dim: 32,
            kernel_count: 3,
            layer_count: 3,
            init_edge_prob: 2.0 / n as f64,
            init_mode: InitMode::Aleatory,
            adjacency_normalization: AdjacencyNormalization::Symmetric,
            score_recurrence: ScoreRecurrence::Rectified,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n < 3 {
            return Err(ModelError::BadConfig(format!(
                "n must be >= 3, got {}",
                self.n
            )));
        }
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("kernel_count", self.kernel_count),
            ("layer_count", self.layer_count),
        ] {
            if v < 1 {
                return Err(ModelError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.init_edge_prob) {
            return Err(ModelError::BadConfig(
                "init_edge_prob must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Feature width feeding layer `l`: raw inputs for the first layer,
    /// hidden width afterwards.
    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Learnable matrices of one recurrent block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Per-kernel feature maps, `d_in x h` each.
    pub kernels: Vec<Array2<f64>>,
    /// Local embedding mix, `h x h`.
    pub local_mix: Array2<f64>,
    /// Global embedding mix, `h x h`.
    pub global_mix: Array2<f64>,
    /// Bilinear core of the pair scorer, `h x h`.
    pub pair_mix: Array2<f64>,
    /// Node mixing of the pair scorer, `n x n`.
    pub node_mix: Array2<f64>,
}

/// The whole model: one [`LayerParams`] per recurrent block plus its config.
#[derive(Debug, Clone, PartialEq)]
pub struct GlnParams {
    pub config: GlnConfig,
    pub layers: Vec<LayerParams>,
}

impl GlnParams {
    /// Zero-valued parameters with the same shapes; the gradient container.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                kernels: l.kernels.iter().map(|w| Array2::zeros(w.dim())).collect(),
                local_mix: Array2::zeros(l.local_mix.dim()),
                global_mix: Array2::zeros(l.global_mix.dim()),
                pair_mix: Array2::zeros(l.pair_mix.dim()),
                node_mix: Array2::zeros(l.node_mix.dim()),
            })
            .collect();
        Self {
            config: self.config.clone(),
            layers,
        }
    }

    /// All matrices in a fixed order (layer-major, kernels first); the
    /// canonical ordering shared by the optimizer state.
    pub fn matrices(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.kernels.iter());
            out.push(&layer.local_mix);
            out.push(&layer.global_mix);
            out.push(&layer.pair_mix);
            out.push(&layer.node_mix);
        }
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.kernels.iter_mut());
            out.push(&mut layer.local_mix);
            out.push(&mut layer.global_mix);
            out.push(&mut layer.pair_mix);
            out.push(&mut layer.node_mix);
        }
        out
    }

    /// Total number of learnable scalars.
    pub fn count(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    /// In-place `self += rhs * scale`; shapes must match.
    pub fn add_scaled(&mut self, rhs: &GlnParams, scale: f64) {
        for (a, b) in self.matrices_mut().into_iter().zip(rhs.matrices()) {
            a.zip_mut_with(b, |x, &y| *x += scale * y);
        }
    }
}

fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Glorot-uniform initialization of every learnable matrix; deterministic
/// given the generator state.
pub fn init_params(config: &GlnConfig, rng: &mut impl Rng) -> Result<GlnParams, ModelError> {
    config.validate()?;
    let h = config.hidden_dim;
    let n = config.n;
    let layers = (0..config.layer_count)
        .map(|l| {
            let d_in = config.layer_input_dim(l);
            LayerParams {
                kernels: (0..config.kernel_count)
                    .map(|_| glorot_uniform(d_in, h, rng))
                    .collect(),
                local_mix: glorot_uniform(h, h, rng),
                global_mix: glorot_uniform(h, h, rng),
                pair_mix: glorot_uniform(h, h, rng),
                node_mix: glorot_uniform(n, n, rng),
            }
        })
        .collect();
    Ok(GlnParams {
        config: config.clone(),
        layers,
    })
}

/// Starting adjacency per the configured mode: identity, or a symmetric
/// binary matrix with each upper-triangle entry set with probability
/// `init_edge_prob`.
pub fn init_adjacency(config: &GlnConfig, rng: &mut impl Rng) -> Array2<f64> {
    let n = config.n;
    match config.init_mode {
        InitMode::Identity => Array2::eye(n),
        InitMode::Aleatory => {
            let mut a = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < config.init_edge_prob {
                        a[[i, j]] = 1.0;
                        a[[j, i]] = 1.0;
                    }
                }
            }
            a
        }
    }
}

/// Symmetric degree normalization with self-loops:
/// `D^(-1/2) (A + I) D^(-1/2)` where `D` holds the row sums of `A + I`.
/// Raw mode passes the input through unchanged.
pub fn normalize_adjacency(a: &Array2<f64>, mode: AdjacencyNormalization) -> Array2<f64> {
    normalize_with_degrees(a, mode).0
}

pub(crate) fn normalize_with_degrees(
    a: &Array2<f64>,
    mode: AdjacencyNormalization,
) -> (Array2<f64>, Array1<f64>) {
    let n = a.nrows();
    match mode {
        AdjacencyNormalization::Raw => (a.clone(), Array1::ones(n)),
        AdjacencyNormalization::Symmetric => {
            // Self-loops keep every degree >= 1, so the rescale is total.
            let mut degrees = Array1::zeros(n);
            for i in 0..n {
                degrees[i] = a.row(i).sum() + 1.0;
            }
            let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
            let mut out = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    let b = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
                    out[[i, j]] = b * inv_sqrt[i] * inv_sqrt[j];
                }
            }
            (out, degrees)
        }
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// One graph kernel: `ReLU(a_hat * h * w)`.
pub fn kernel_conv(
    a_hat: &Array2<f64>,
    h: &Array2<f64>,
    w: &Array2<f64>,
) -> Result<Array2<f64>, ModelError> {
    if a_hat.ncols() != h.nrows() || h.ncols() != w.nrows() {
        return Err(ModelError::ShapeMismatch {
            expected: format!(
                "({0} x m) * (m x {1}) * ({1} x out)",
                a_hat.nrows(),
                w.nrows()
            ),
            got: format!("{:?} * {:?} * {:?}", a_hat.dim(), h.dim(), w.dim()),
        });
    }
    Ok(relu(&a_hat.dot(h).dot(w)))
}

/// Everything one recurrent block computed, kept for backpropagation.
/// Pre-activation matrices are stored so ReLU masks can be rebuilt exactly.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Adjacency fed into the block.
    pub adj_in: Array2<f64>,
    /// Normalized adjacency used by the products.
    pub adj_norm: Array2<f64>,
    /// Row-sum degrees of `adj_in + I` (ones in raw mode).
    pub degrees: Array1<f64>,
    /// Node features fed into the block.
    pub feat_in: Array2<f64>,
    /// Per-kernel pre-activations.
    pub kernel_pre: Vec<Array2<f64>>,
    /// Sum of rectified kernel outputs.
    pub combined: Array2<f64>,
    /// `combined * local_mix`, before the adjacency product.
    pub local_in: Array2<f64>,
    /// Local embedding pre-activation.
    pub local_pre: Array2<f64>,
    pub local: Array2<f64>,
    /// Global embedding pre-activation.
    pub global_pre: Array2<f64>,
    pub global: Array2<f64>,
    /// Raw pair scores before symmetrization.
    pub scores_raw: Array2<f64>,
    /// Symmetrized scores with zero diagonal; the block's output adjacency
    /// is their rectification.
    pub scores_sym: Array2<f64>,
}

/// Retained activations of a full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// Edge probabilities: logistic of the last symmetrized scores, diagonal
    /// forced to zero. Symmetric with entries in (0, 1).
    pub probs: Array2<f64>,
}

fn symmetrize_zero_diag(s: &Array2<f64>) -> Array2<f64> {
    let n = s.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[[i, j]] = 0.5 * (s[[i, j]] + s[[j, i]]);
            }
        }
    }
    out
}

fn all_finite(m: &Array2<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Adjacency handed to the next block, per the configured recurrence.
pub(crate) fn next_adjacency(scores_sym: &Array2<f64>, mode: ScoreRecurrence) -> Array2<f64> {
    match mode {
        ScoreRecurrence::Rectified => relu(scores_sym),
        ScoreRecurrence::Logistic => {
            let n = scores_sym.nrows();
            let mut a = scores_sym.mapv(|s| 1.0 / (1.0 + (-s).exp()));
            for i in 0..n {
                a[[i, i]] = 0.0;
            }
            a
        }
    }
}

/// Node features of an instance: one row of planar coordinates per node.
pub fn coord_features(instance: &TspInstance) -> Array2<f64> {
    let n = instance.n();
    Array2::from_shape_fn((n, 2), |(i, j)| instance.coords()[i][j])
}

/// Run the recurrent blocks and return the full trace.
///
/// `features` must be `n x input_dim` and `a0` the `n x n` starting
/// adjacency. Each block reads the previous block's local embedding as its
/// features and the rectified symmetrized scores as its adjacency.
pub fn forward(
    params: &GlnParams,
    features: &Array2<f64>,
    a0: &Array2<f64>,
) -> Result<ForwardTrace, ModelError> {
    let config = &params.config;
    let n = config.n;
    if features.nrows() != n {
        return Err(ModelError::NodeCountMismatch {
            expected: n,
            got: features.nrows(),
        });
    }
    if features.ncols() != config.input_dim {
        return Err(ModelError::ShapeMismatch {
            expected: format!("({n}, {})", config.input_dim),
            got: format!("{:?}", features.dim()),
        });
    }
    if a0.dim() != (n, n) {
        return Err(ModelError::ShapeMismatch {
            expected: format!("({n}, {n})"),
            got: format!("{:?}", a0.dim()),
        });
    }

    let mut feat = features.clone();
    let mut adj = a0.clone();
    let mut layers = Vec::with_capacity(config.layer_count);

    for (layer_idx, layer) in params.layers.iter().enumerate() {
        let (adj_norm, degrees) = normalize_with_degrees(&adj, config.adjacency_normalization);

        let mut kernel_pre = Vec::with_capacity(config.kernel_count);
        let mut combined = Array2::zeros((n, config.hidden_dim));
        for w in &layer.kernels {
            let pre = adj_norm.dot(&feat).dot(w);
            combined += &relu(&pre);
            kernel_pre.push(pre);
        }

        let local_in = combined.dot(&layer.local_mix);
        let local_pre = adj_norm.dot(&local_in);
        let local = relu(&local_pre);

        let global_pre = local.dot(&layer.global_mix);
        let global = relu(&global_pre);

        let mixed_local = layer.node_mix.dot(&local);
        let mixed_global = layer.node_mix.dot(&global);
        let scores_raw = mixed_local.dot(&layer.pair_mix).dot(&mixed_global.t());
        let scores_sym = symmetrize_zero_diag(&scores_raw);

        if !all_finite(&scores_sym) || !all_finite(&local) {
            return Err(ModelError::NonFinite { layer: layer_idx });
        }

        let trace = LayerTrace {
            adj_in: adj,
            adj_norm,
            degrees,
            feat_in: feat,
            kernel_pre,
            combined,
            local_in,
            local_pre,
            local: local.clone(),
            global_pre,
            global,
            scores_raw,
            scores_sym: scores_sym.clone(),
        };
        adj = next_adjacency(&scores_sym, config.score_recurrence);
        feat = local;
        layers.push(trace);
    }

    let last = layers.last().expect("at least one layer");
    let mut probs = last.scores_sym.mapv(|s| 1.0 / (1.0 + (-s).exp()));
    for i in 0..n {
        probs[[i, i]] = 0.0;
    }
    Ok(ForwardTrace { layers, probs })
}

#[cfg(test)]
pub(crate) fn tiny_test_config() -> GlnConfig {
    GlnConfig {
        n: 4,
        input_dim: 2,
        hidden_dim: 3,
        kernel_count: 2,
        layer_count: 2,
        init_edge_prob: 0.5,
        init_mode: InitMode::Aleatory,
        adjacency_normalization: AdjacencyNormalization::Symmetric,
        score_recurrence: ScoreRecurrence::Rectified,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;

    #[test]
    fn init_is_deterministic() {
        let config = GlnConfig::for_nodes(10);
        let a = init_params(&config, &mut stream_rng(3, &[])).unwrap();
        let b = init_params(&config, &mut stream_rng(3, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_count_matches_shape_arithmetic() {
        let config = GlnConfig::for_nodes(10);
        let params = init_params(&config, &mut stream_rng(1, &[])).unwrap();
        // First layer reads 2 input features, later layers 32.
        let expected: usize = (0..3)
            .map(|l| {
                let d_in = if l == 0 { 2 } else { 32 };
                3 * d_in * 32 + 3 * 32 * 32 + 10 * 10
            })
            .sum();
        assert_eq!(params.count(), expected);
        assert_eq!(expected, 15_852);
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let config = GlnConfig::for_nodes(10);
        let params = init_params(&config, &mut stream_rng(2, &[])).unwrap();
        for m in params.matrices() {
            let (rows, cols) = m.dim();
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            assert!(m.iter().all(|&v| v.abs() <= bound));
        }
    }

    #[test]
    fn identity_adjacency_is_identity() {
        let mut config = GlnConfig::for_nodes(6);
        config.init_mode = InitMode::Identity;
        let a = init_adjacency(&config, &mut stream_rng(1, &[]));
        assert_eq!(a, Array2::<f64>::eye(6));
    }

    #[test]
    fn zero_probability_gives_zero_matrix() {
        let mut config = GlnConfig::for_nodes(6);
        config.init_edge_prob = 0.0;
        let a = init_adjacency(&config, &mut stream_rng(1, &[]));
        assert_eq!(a, Array2::<f64>::zeros((6, 6)));
    }

    #[test]
    fn aleatory_edge_count_matches_binomial_mean() {
        let config = GlnConfig::for_nodes(50); // p = 2/50
        let mut total = 0.0;
        for rep in 0..1000u64 {
            let a = init_adjacency(&config, &mut stream_rng(5, &[rep]));
            total += a.sum() / 2.0;
        }
        let mean = total / 1000.0;
        // E[edges] = C(50,2) * 0.04 = 49.
        assert!((mean - 49.0).abs() < 5.0, "mean edge count {mean}");
    }

    #[test]
    fn normalize_zero_adjacency_is_identity() {
        let a = Array2::zeros((5, 5));
        let out = normalize_adjacency(&a, AdjacencyNormalization::Symmetric);
        assert_eq!(out, Array2::<f64>::eye(5));
    }

    #[test]
    fn normalize_four_cycle_matches_direct_formula() {
        let mut a = Array2::zeros((4, 4));
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        let out = normalize_adjacency(&a, AdjacencyNormalization::Symmetric);
        // Every node of the cycle has degree 3 after the self-loop.
        for i in 0..4 {
            for j in 0..4 {
                let b = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
                let expect = b / (3.0f64.sqrt() * 3.0f64.sqrt());
                assert!((out[[i, j]] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_raw_mode_is_identity_function() {
        let a = Array2::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f64);
        let out = normalize_adjacency(&a, AdjacencyNormalization::Raw);
        assert_eq!(out, a);
    }

    #[test]
    fn kernel_conv_zero_weights() {
        let a = Array2::eye(3);
        let h = Array2::ones((3, 2));
        let w = Array2::zeros((2, 4));
        let out = kernel_conv(&a, &h, &w).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((3, 4)));
    }

    #[test]
    fn kernel_conv_identity_propagation() {
        let a = Array2::eye(3);
        let h = Array2::eye(3);
        let w = Array2::from_shape_fn((3, 3), |(i, j)| (i + j) as f64 * 0.25);
        let out = kernel_conv(&a, &h, &w).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn kernel_conv_matches_triple_product_oracle() {
        let mut rng = stream_rng(8, &[]);
        let a = Array2::from_shape_fn((4, 4), |_| rng.random::<f64>());
        let h = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>() - 0.5);
        let w = Array2::from_shape_fn((2, 3), |_| rng.random::<f64>() - 0.5);
        let out = kernel_conv(&a, &h, &w).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut v = 0.0;
                for p in 0..4 {
                    for q in 0..2 {
                        v += a[[i, p]] * h[[p, q]] * w[[q, j]];
                    }
                }
                assert!((out[[i, j]] - v.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_conv_rejects_shape_mismatch() {
        let a = Array2::eye(3);
        let h = Array2::ones((4, 2));
        let w = Array2::zeros((2, 4));
        assert!(matches!(
            kernel_conv(&a, &h, &w),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_params_give_half_probabilities() {
        let config = tiny_test_config();
        let params = init_params(&config, &mut stream_rng(1, &[]))
            .unwrap()
            .zeros_like();
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64 * 0.1);
        let a0 = Array2::eye(4);
        let trace = forward(&params, &x, &a0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.0 } else { 0.5 };
                assert_eq!(trace.probs[[i, j]], expect);
            }
        }
    }

    #[test]
    fn forward_trace_shapes() {
        let config = GlnConfig::for_nodes(10);
        let params = init_params(&config, &mut stream_rng(4, &[])).unwrap();
        let mut rng = stream_rng(5, &[]);
        let x = Array2::from_shape_fn((10, 2), |_| rng.random::<f64>());
        let a0 = init_adjacency(&config, &mut rng);
        let trace = forward(&params, &x, &a0).unwrap();
        assert_eq!(trace.layers.len(), 3);
        for (l, t) in trace.layers.iter().enumerate() {
            assert_eq!(t.feat_in.dim(), (10, if l == 0 { 2 } else { 32 }));
            assert_eq!(t.local.dim(), (10, 32));
            assert_eq!(t.adj_in.dim(), (10, 10));
            assert_eq!(t.scores_sym.dim(), (10, 10));
        }
        assert_eq!(trace.probs.dim(), (10, 10));
        for i in 0..10 {
            assert_eq!(trace.probs[[i, i]], 0.0);
            for j in 0..10 {
                assert!((trace.probs[[i, j]] - trace.probs[[j, i]]).abs() < 1e-12);
                assert!((0.0..1.0).contains(&trace.probs[[i, j]]));
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_node_count() {
        let config = tiny_test_config();
        let params = init_params(&config, &mut stream_rng(1, &[])).unwrap();
        let x = Array2::zeros((5, 2));
        let a0 = Array2::eye(5);
        assert!(matches!(
            forward(&params, &x, &a0),
            Err(ModelError::NodeCountMismatch {
                expected: 4,
                got: 5
            })
        ));
    }

    /// Straight-line re-implementation of the whole forward pass with plain
    /// nested loops; the independent oracle for the ndarray path.
    #[test]
    fn forward_matches_straight_line_recomputation() {
        let config = tiny_test_config();
        let params = init_params(&config, &mut stream_rng(21, &[])).unwrap();
        let mut rng = stream_rng(22, &[]);
        let x = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>());
        let a0 = init_adjacency(&config, &mut rng);
        let trace = forward(&params, &x, &a0).unwrap();

        type M = Vec<Vec<f64>>;
        let to_vec = |m: &Array2<f64>| -> M {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[[i, j]]).collect())
                .collect()
        };
        let matmul = |a: &M, b: &M| -> M {
            let (r, inner, c) = (a.len(), b.len(), b[0].len());
            let mut out = vec![vec![0.0; c]; r];
            for i in 0..r {
                for p in 0..inner {
                    for j in 0..c {
                        out[i][j] += a[i][p] * b[p][j];
                    }
                }
            }
            out
        };
        let relu_m = |m: &M| -> M {
            m.iter()
                .map(|row| row.iter().map(|&v| v.max(0.0)).collect())
                .collect()
        };
        let transpose = |m: &M| -> M {
            (0..m[0].len())
                .map(|j| (0..m.len()).map(|i| m[i][j]).collect())
                .collect()
        };

        let n = 4;
        let mut feat = to_vec(&x);
        let mut adj = to_vec(&a0);
        let mut probs_expect: M = vec![];
        for layer in &params.layers {
            // Normalization written out from its definition.
            let mut a_hat = vec![vec![0.0; n]; n];
            let mut deg = vec![0.0; n];
            for i in 0..n {
                deg[i] = adj[i].iter().sum::<f64>() + 1.0;
            }
            for i in 0..n {
                for j in 0..n {
                    let b = adj[i][j] + if i == j { 1.0 } else { 0.0 };
                    a_hat[i][j] = b / (deg[i].sqrt() * deg[j].sqrt());
                }
            }
            let mut combined = vec![vec![0.0; 3]; n];
            for w in &layer.kernels {
                let k = relu_m(&matmul(&matmul(&a_hat, &feat), &to_vec(w)));
                for i in 0..n {
                    for j in 0..3 {
                        combined[i][j] += k[i][j];
                    }
                }
            }
            let local = relu_m(&matmul(
                &matmul(&a_hat, &combined),
                &to_vec(&layer.local_mix),
            ));
            let global = relu_m(&matmul(&local, &to_vec(&layer.global_mix)));
            let ml = matmul(&to_vec(&layer.node_mix), &local);
            let mg = matmul(&to_vec(&layer.node_mix), &global);
            let s_raw = matmul(&matmul(&ml, &to_vec(&layer.pair_mix)), &transpose(&mg));
            let mut s_sym = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        s_sym[i][j] = 0.5 * (s_raw[i][j] + s_raw[j][i]);
                    }
                }
            }
            adj = relu_m(&s_sym);
            feat = local;
            probs_expect = s_sym
                .iter()
                .map(|row| row.iter().map(|&s| 1.0 / (1.0 + (-s).exp())).collect())
                .collect();
        }
        for i in 0..n {
            probs_expect[i][i] = 0.0;
        }

        for i in 0..n {
            for j in 0..n {
                assert!(
                    (trace.probs[[i, j]] - probs_expect[i][j]).abs() < 1e-12,
                    "probs[{i}][{j}]"
                );
            }
        }
    }

    #[test]
    fn rectified_recurrence_feeds_relu_scores_forward() {
        let mut config = tiny_test_config();
        config.score_recurrence = ScoreRecurrence::Rectified;
        let params = init_params(&config, &mut stream_rng(31, &[])).unwrap();
        let mut rng = stream_rng(32, &[]);
        let x = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>());
        let a0 = init_adjacency(&config, &mut rng);
        let trace = forward(&params, &x, &a0).unwrap();
        let first = &trace.layers[0];
        let second = &trace.layers[1];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(second.adj_in[[i, j]], first.scores_sym[[i, j]].max(0.0));
            }
        }
    }

    #[test]
    fn logistic_recurrence_feeds_probabilities_forward() {
        let mut config = tiny_test_config();
        config.score_recurrence = ScoreRecurrence::Logistic;
        let params = init_params(&config, &mut stream_rng(31, &[])).unwrap();
        let mut rng = stream_rng(32, &[]);
        let x = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>());
        let a0 = init_adjacency(&config, &mut rng);
        let trace = forward(&params, &x, &a0).unwrap();
        let first = &trace.layers[0];
        let second = &trace.layers[1];
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j {
                    0.0
                } else {
                    1.0 / (1.0 + (-first.scores_sym[[i, j]]).exp())
                };
                assert_eq!(second.adj_in[[i, j]], expect);
            }
        }
    }
}
