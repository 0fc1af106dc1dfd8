//! Mini-batch training with early stopping on validation loss.
//!
//! Per-sample forward/backward runs in parallel within a batch; gradients
//! are collected in sample order and reduced sequentially, so results are
//! bitwise identical no matter how many threads do the work. Every random
//! draw (weight init, epoch shuffles, starting adjacencies) comes from a
//! dedicated stream of the training seed.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::LabeledSample;
use crate::eval::{binarize, edge_metrics};
use crate::model::{
    adam_step, backward, coord_features, forward, init_adjacency, init_params, total_loss,
    AdamState, GlnConfig, GlnParams, LossConfig, ModelError, TrainConfig,
};
use crate::seeding::stream_rng;

const TAG_INIT: u64 = 0x696e_6974;
const TAG_SHUFFLE: u64 = 0x7368_7566;
const TAG_TRAIN_A0: u64 = 0x7472_6130;
const TAG_VAL_A0: u64 = 0x7661_6c30;

/// One row of the training history.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

/// Threshold used for the history's validation F1 column.
const HISTORY_THRESHOLD: f64 = 0.5;

fn check_samples(
    samples: &[LabeledSample],
    which: &'static str,
    n: usize,
) -> Result<(), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptySet(which));
    }
    for s in samples {
        if s.instance.n() != n {
            return Err(ModelError::NodeCountMismatch {
                expected: n,
                got: s.instance.n(),
            });
        }
    }
    Ok(())
}

struct SampleBatchResult {
    loss: f64,
    grads: GlnParams,
}

/// Train on `train_set`, early-stop on `val_set`, and return the parameters
/// of the best validation epoch together with the per-epoch history.
pub fn train(
    train_set: &[LabeledSample],
    val_set: &[LabeledSample],
    config: &GlnConfig,
    loss_config: &LossConfig,
    train_config: &TrainConfig,
) -> Result<(GlnParams, Vec<EpochStats>), ModelError> {
    config.validate()?;
    loss_config.validate()?;
    train_config.validate()?;
    check_samples(train_set, "training", config.n)?;
    check_samples(val_set, "validation", config.n)?;

    let seed = train_config.seed;
    let mut params = init_params(config, &mut stream_rng(seed, &[TAG_INIT]))?;
    let mut adam = AdamState::new(&params);

    let train_features: Vec<Array2<f64>> = train_set
        .iter()
        .map(|s| coord_features(&s.instance))
        .collect();
    let val_features: Vec<Array2<f64>> = val_set
        .iter()
        .map(|s| coord_features(&s.instance))
        .collect();
    // Each sample keeps one starting adjacency for the whole run: epoch-to-
    // epoch loss then reflects parameter movement only, and the training
    // inputs of a constant dataset are constant.
    let train_adjacency: Vec<Array2<f64>> = (0..train_set.len())
        .map(|i| init_adjacency(config, &mut stream_rng(seed, &[TAG_TRAIN_A0, i as u64])))
        .collect();
    let val_adjacency: Vec<Array2<f64>> = (0..val_set.len())
        .map(|i| init_adjacency(config, &mut stream_rng(seed, &[TAG_VAL_A0, i as u64])))
        .collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, GlnParams)> = None;
    let mut stale_epochs = 0usize;

    for epoch in 1..=train_config.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut stream_rng(seed, &[TAG_SHUFFLE, epoch as u64]));

        let mut epoch_loss_sum = 0.0;
        for batch in order.chunks(train_config.batch_size) {
            let results: Vec<SampleBatchResult> = batch
                .par_iter()
                .map(|&idx| {
                    let sample = &train_set[idx];
                    let trace = forward(&params, &train_features[idx], &train_adjacency[idx])?;
                    let loss = total_loss(&trace.probs, &sample.target_adjacency, loss_config)?;
                    let grads = backward(&params, &trace, &sample.target_adjacency, loss_config)?;
                    Ok(SampleBatchResult { loss, grads })
                })
                .collect::<Result<_, ModelError>>()?;

            let scale = 1.0 / batch.len() as f64;
            let mut grad_mean = params.zeros_like();
            for r in &results {
                epoch_loss_sum += r.loss;
                grad_mean.add_scaled(&r.grads, scale);
            }
            adam_step(&mut params, &grad_mean, &mut adam, train_config.learning_rate)?;
        }
        let train_loss = epoch_loss_sum / train_set.len() as f64;

        let (val_loss, val_f1) = validate(
            &params,
            val_set,
            &val_features,
            &val_adjacency,
            loss_config,
        )?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_f1,
        });

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= train_config.patience {
                break;
            }
        }
    }

    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}

fn validate(
    params: &GlnParams,
    val_set: &[LabeledSample],
    features: &[Array2<f64>],
    adjacency: &[Array2<f64>],
    loss_config: &LossConfig,
) -> Result<(f64, f64), ModelError> {
    let per_sample: Vec<(f64, (usize, usize, usize))> = val_set
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let trace = forward(params, &features[i], &adjacency[i])?;
            let loss = total_loss(&trace.probs, &sample.target_adjacency, loss_config)?;
            let pred = binarize(&trace.probs, HISTORY_THRESHOLD)
                .map_err(|e| ModelError::BadConfig(e.to_string()))?;
            let m = edge_metrics(&pred, &sample.target_adjacency)
                .map_err(|e| ModelError::BadConfig(e.to_string()))?;
            Ok((loss, (m.true_pos, m.false_pos, m.false_neg)))
        })
        .collect::<Result<_, ModelError>>()?;

    let loss = per_sample.iter().map(|(l, _)| l).sum::<f64>() / val_set.len() as f64;
    let (tp, fp, fn_) = per_sample.iter().fold((0, 0, 0), |acc, (_, c)| {
        (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2)
    });
    let f1 = if 2 * tp + fp + fn_ > 0 {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    } else {
        0.0
    };
    Ok((loss, f1))
}
