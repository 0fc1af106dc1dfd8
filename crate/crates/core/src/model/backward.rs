//! Reverse-mode gradients of the composite loss with respect to every
//! learnable matrix, derived by hand for the fixed block structure.
//!
//! The recurrence makes this more than a feed-forward chain: each block's
//! symmetrized scores become the next block's adjacency, so gradients flow
//! both through the feature path (local embeddings) and through the
//! adjacency path, including the degree terms of the symmetric
//! normalization. ReLU uses subgradient 0 at 0 throughout.

use ndarray::{Array1, Array2};

use crate::graph::SymmetricAdjacency;
use crate::model::loss::loss_probs_grad;
use crate::model::{
    AdjacencyNormalization, ForwardTrace, GlnParams, LayerTrace, LossConfig, ModelError,
    ScoreRecurrence,
};

/// `grad` masked by the positive set of `pre`: entries where the forward
/// pre-activation was <= 0 contribute nothing.
fn relu_mask(grad: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

/// Gradient through `a_hat = D^(-1/2) (A + I) D^(-1/2)`.
///
/// Perturbing `A[p][q]` moves entry (p, q) directly and, through the row-sum
/// degree `d_p`, rescales the whole row p and column p of `a_hat`.
fn normalize_backward(
    grad_ahat: &Array2<f64>,
    adj_in: &Array2<f64>,
    degrees: &Array1<f64>,
    mode: AdjacencyNormalization,
) -> Array2<f64> {
    match mode {
        AdjacencyNormalization::Raw => grad_ahat.clone(),
        AdjacencyNormalization::Symmetric => {
            let n = adj_in.nrows();
            let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
            let with_loops = |i: usize, j: usize| -> f64 {
                adj_in[[i, j]] + if i == j { 1.0 } else { 0.0 }
            };
            // row_term[p] = sum_j G_pj B_pj d_j^(-1/2),
            // col_term[p] = sum_i G_ip B_ip d_i^(-1/2).
            let mut row_term = vec![0.0; n];
            let mut col_term = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    let b = with_loops(i, j) * grad_ahat[[i, j]];
                    row_term[i] += b * inv_sqrt[j];
                    col_term[j] += b * inv_sqrt[i];
                }
            }
            let mut grad = Array2::zeros((n, n));
            for p in 0..n {
                let d_p32 = inv_sqrt[p] / degrees[p]; // d_p^(-3/2)
                let degree_part = 0.5 * d_p32 * (row_term[p] + col_term[p]);
                for q in 0..n {
                    grad[[p, q]] = grad_ahat[[p, q]] * inv_sqrt[p] * inv_sqrt[q] - degree_part;
                }
            }
            grad
        }
    }
}

/// Gradient with respect to the raw scores, given the gradient on the
/// symmetrized matrix viewed as pair variables (same value mirrored at
/// (i, j) and (j, i); identically zero diagonal).
fn scores_raw_grad_from_pairs(pair_grad: &Array2<f64>) -> Array2<f64> {
    let n = pair_grad.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                // s_sym[i][j] = (s_raw[i][j] + s_raw[j][i]) / 2.
                out[[i, j]] = 0.5 * pair_grad[[i, j]];
            }
        }
    }
    out
}

/// Exact gradients of [`total_loss`](crate::model::total_loss) over the
/// trace's forward pass; same shapes as the parameters.
pub fn backward(
    params: &GlnParams,
    trace: &ForwardTrace,
    target: &SymmetricAdjacency,
    loss_config: &LossConfig,
) -> Result<GlnParams, ModelError> {
    loss_config.validate()?;
    let config = &params.config;
    let n = config.n;
    if trace.layers.len() != params.layers.len() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{} layer traces", params.layers.len()),
            got: format!("{}", trace.layers.len()),
        });
    }
    if target.n() != n || trace.probs.dim() != (n, n) {
        return Err(ModelError::NodeCountMismatch {
            expected: n,
            got: target.n(),
        });
    }

    let mut grads = params.zeros_like();

    // Loss -> last layer's symmetrized scores. probs holds the logistic of
    // the scores off-diagonal, so sigma' = p (1 - p).
    let probs_grad = loss_probs_grad(&trace.probs, target, loss_config)?;
    let mut pair_grad = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let p = trace.probs[[i, j]];
                pair_grad[[i, j]] = probs_grad[[i, j]] * p * (1.0 - p);
            }
        }
    }

    // Running gradients flowing into each block from downstream: with
    // respect to its raw scores and to its output features.
    let mut grad_scores_raw = scores_raw_grad_from_pairs(&pair_grad);
    let mut grad_feat_out: Array2<f64> = Array2::zeros((n, config.hidden_dim));

    for (layer_idx, (layer, t)) in params
        .layers
        .iter()
        .zip(&trace.layers)
        .enumerate()
        .rev()
    {
        let LayerTrace {
            adj_in,
            adj_norm,
            degrees,
            feat_in,
            kernel_pre,
            combined,
            local_in,
            local_pre,
            local,
            global_pre,
            global,
            ..
        } = t;
        let g = &mut grads.layers[layer_idx];

        // Pair scorer: s_raw = (M local) Q (M global)^T.
        let mixed_local = layer.node_mix.dot(local);
        let mixed_scaled = mixed_local.dot(&layer.pair_mix);
        let mixed_global = layer.node_mix.dot(global);

        let d_mixed_scaled = grad_scores_raw.dot(&mixed_global);
        let d_mixed_global = grad_scores_raw.t().dot(&mixed_scaled);
        g.pair_mix += &mixed_local.t().dot(&d_mixed_scaled);
        let d_mixed_local = d_mixed_scaled.dot(&layer.pair_mix.t());
        g.node_mix += &d_mixed_local.dot(&local.t());
        g.node_mix += &d_mixed_global.dot(&global.t());
        let grad_local_from_scores = layer.node_mix.t().dot(&d_mixed_local);
        let grad_global = layer.node_mix.t().dot(&d_mixed_global);

        // Global embedding: global = ReLU(local * Z).
        let d_global_pre = relu_mask(&grad_global, global_pre);
        g.global_mix += &local.t().dot(&d_global_pre);
        let grad_local_from_global = d_global_pre.dot(&layer.global_mix.t());

        // All contributions into the local embedding.
        let grad_local = &grad_local_from_scores + &grad_local_from_global + &grad_feat_out;

        // Local embedding: local = ReLU(a_hat * (combined * U)).
        let d_local_pre = relu_mask(&grad_local, local_pre);
        let mut grad_adj_norm = d_local_pre.dot(&local_in.t());
        let d_local_in = adj_norm.t().dot(&d_local_pre);
        g.local_mix += &combined.t().dot(&d_local_in);
        let d_combined = d_local_in.dot(&layer.local_mix.t());

        // Kernels: combined = sum_i ReLU(a_hat * feat * W_i).
        let mut grad_feat_in = Array2::zeros(feat_in.dim());
        let mut kernel_grads = Vec::with_capacity(config.kernel_count);
        for (w, pre) in layer.kernels.iter().zip(kernel_pre) {
            let d_pre = relu_mask(&d_combined, pre);
            let kernel_feats = feat_in.dot(w);
            grad_adj_norm += &d_pre.dot(&kernel_feats.t());
            let d_kernel_feats = adj_norm.t().dot(&d_pre);
            kernel_grads.push(feat_in.t().dot(&d_kernel_feats));
            grad_feat_in += &d_kernel_feats.dot(&w.t());
        }
        g.kernels = kernel_grads;

        let grad_adj_in = normalize_backward(
            &grad_adj_norm,
            adj_in,
            degrees,
            config.adjacency_normalization,
        );

        if layer_idx > 0 {
            // This block's adjacency came from the previous scores_sym;
            // weight by the recurrence derivative and fold back into
            // pair-variable form.
            let prev_scores = &trace.layers[layer_idx - 1].scores_sym;
            let weighted = match config.score_recurrence {
                ScoreRecurrence::Rectified => relu_mask(&grad_adj_in, prev_scores),
                ScoreRecurrence::Logistic => {
                    let mut g = grad_adj_in.clone();
                    g.zip_mut_with(prev_scores, |g, &s| {
                        let p = 1.0 / (1.0 + (-s).exp());
                        *g *= p * (1.0 - p);
                    });
                    g
                }
            };
            let mut pair = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        pair[[i, j]] = weighted[[i, j]] + weighted[[j, i]];
                    }
                }
            }
            grad_scores_raw = scores_raw_grad_from_pairs(&pair);
            grad_feat_out = grad_feat_in;
        }
    }

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{canonicalize, tour_to_adjacency};
    use crate::model::{
        forward, init_adjacency, init_params, tiny_test_config, total_loss, GlnConfig, InitMode,
    };
    use crate::seeding::stream_rng;
    use ndarray::Array2;
    use rand::Rng;

    fn loss_of(
        params: &GlnParams,
        x: &Array2<f64>,
        a0: &Array2<f64>,
        target: &SymmetricAdjacency,
        cfg: &LossConfig,
    ) -> f64 {
        let trace = forward(params, x, a0).unwrap();
        total_loss(&trace.probs, target, cfg).unwrap()
    }

    /// Central finite differences over every parameter entry, skipping
    /// entries whose analytic gradient is below the comparison floor.
    fn assert_grads_match_fd(config: &GlnConfig, seed: u64) {
        let mut params = init_params(config, &mut stream_rng(seed, &[0])).unwrap();
        let mut rng = stream_rng(seed, &[1]);
        let x = Array2::from_shape_fn((config.n, config.input_dim), |_| rng.random::<f64>());
        let a0 = init_adjacency(config, &mut rng);
        let target = tour_to_adjacency(
            &canonicalize(&{
                let mut order: Vec<usize> = (0..config.n).collect();
                use rand::seq::SliceRandom;
                order.shuffle(&mut rng);
                order
            })
            .unwrap(),
        );
        let cfg = LossConfig::default();

        let trace = forward(&params, &x, &a0).unwrap();
        let grads = backward(&params, &trace, &target, &cfg).unwrap();

        let step = 1e-4;
        let matrix_count = grads.matrices().len();
        for mat in 0..matrix_count {
            let (rows, cols) = grads.matrices()[mat].dim();
            for r in 0..rows {
                for c in 0..cols {
                    let analytic = grads.matrices()[mat][[r, c]];
                    if analytic.abs() <= 1e-6 {
                        continue;
                    }
                    let original = params.matrices()[mat][[r, c]];
                    params.matrices_mut()[mat][[r, c]] = original + step;
                    let plus = loss_of(&params, &x, &a0, &target, &cfg);
                    params.matrices_mut()[mat][[r, c]] = original - step;
                    let minus = loss_of(&params, &x, &a0, &target, &cfg);
                    params.matrices_mut()[mat][[r, c]] = original;
                    let fd = (plus - minus) / (2.0 * step);
                    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
                    assert!(
                        rel < 1e-3,
                        "matrix {mat} entry ({r},{c}): analytic {analytic} vs fd {fd} (rel {rel})"
                    );
                }
            }
        }
    }

    #[test]
    fn matches_finite_differences_default_modes() {
        assert_grads_match_fd(&tiny_test_config(), 42);
    }

    #[test]
    fn matches_finite_differences_identity_init() {
        let mut config = tiny_test_config();
        config.init_mode = InitMode::Identity;
        assert_grads_match_fd(&config, 7);
    }

    #[test]
    fn matches_finite_differences_rectified_recurrence() {
        let mut config = tiny_test_config();
        config.score_recurrence = ScoreRecurrence::Rectified;
        assert_grads_match_fd(&config, 5);
    }

    #[test]
    fn matches_finite_differences_raw_normalization() {
        let mut config = tiny_test_config();
        config.adjacency_normalization = AdjacencyNormalization::Raw;
        config.init_mode = InitMode::Identity;
        assert_grads_match_fd(&config, 3);
    }

    #[test]
    fn zero_params_have_zero_kernel_gradients() {
        let config = tiny_test_config();
        let params = init_params(&config, &mut stream_rng(1, &[]))
            .unwrap()
            .zeros_like();
        let mut rng = stream_rng(2, &[]);
        let x = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>());
        let a0 = init_adjacency(&config, &mut rng);
        let target = tour_to_adjacency(&canonicalize(&[0, 1, 2, 3]).unwrap());
        let trace = forward(&params, &x, &a0).unwrap();
        let grads = backward(&params, &trace, &target, &LossConfig::default()).unwrap();
        // Every ReLU sits at exactly 0, whose subgradient is 0: the whole
        // model is flat.
        for m in grads.matrices() {
            assert!(m.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn last_layer_node_mix_gradient_is_nonzero() {
        // A draw whose last-layer embeddings are entirely dead (all ReLUs
        // off) legitimately has a flat node mix; skip those and check the
        // generic case.
        let config = tiny_test_config();
        let mut checked = 0;
        for seed in 0..20 {
            let params = init_params(&config, &mut stream_rng(seed, &[0])).unwrap();
            let mut rng = stream_rng(seed, &[1]);
            let x = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>());
            let a0 = init_adjacency(&config, &mut rng);
            let target = tour_to_adjacency(&canonicalize(&[0, 2, 1, 3]).unwrap());
            let trace = forward(&params, &x, &a0).unwrap();
            let last_trace = trace.layers.last().unwrap();
            if last_trace.global.iter().all(|&v| v == 0.0)
                || last_trace.local.iter().all(|&v| v == 0.0)
            {
                continue;
            }
            let grads = backward(&params, &trace, &target, &LossConfig::default()).unwrap();
            let last = grads.layers.last().unwrap();
            assert!(
                last.node_mix.iter().any(|&v| v.abs() > 1e-12),
                "seed {seed}: node mix gradient vanished on live embeddings"
            );
            checked += 1;
        }
        assert!(checked > 10, "only {checked} generic draws in 20 seeds");
    }

    #[test]
    fn rejects_mismatched_target() {
        let config = tiny_test_config();
        let params = init_params(&config, &mut stream_rng(1, &[])).unwrap();
        let mut rng = stream_rng(2, &[]);
        let x = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>());
        let a0 = init_adjacency(&config, &mut rng);
        let trace = forward(&params, &x, &a0).unwrap();
        let target = tour_to_adjacency(&canonicalize(&[0, 1, 2, 3, 4]).unwrap());
        assert!(backward(&params, &trace, &target, &LossConfig::default()).is_err());
    }
}
