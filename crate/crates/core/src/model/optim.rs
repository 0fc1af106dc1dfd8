//! Adam with bias correction, applied matrix-by-matrix in the canonical
//! parameter order.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{GlnParams, ModelError};

/// Training-loop settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 50,
            max_epochs: 300,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.learning_rate <= 0.0 {
            return Err(ModelError::BadConfig("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::BadConfig("batch size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(ModelError::BadConfig("max_epochs must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(ModelError::BadConfig("patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter matrix plus the step
/// counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(params: &GlnParams) -> Self {
        let zeros: Vec<Array2<f64>> = params
            .matrices()
            .iter()
            .map(|m| Array2::zeros(m.dim()))
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. Gradients must mirror the parameter shapes.
pub fn adam_step(
    params: &mut GlnParams,
    grads: &GlnParams,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<(), ModelError> {
    let shapes_match = params
        .matrices()
        .iter()
        .zip(grads.matrices())
        .all(|(p, g)| p.dim() == g.dim());
    if !shapes_match || params.matrices().len() != state.first.len() {
        return Err(ModelError::ShapeMismatch {
            expected: "gradients and state shaped like parameters".into(),
            got: "mismatched matrix shapes".into(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let (beta1, beta2, eps) = (state.beta1, state.beta2, state.eps);

    for ((param, grad), (m, v)) in params
        .matrices_mut()
        .into_iter()
        .zip(grads.matrices())
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        m.zip_mut_with(grad, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
        v.zip_mut_with(grad, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
        ndarray::Zip::from(param)
            .and(&*m)
            .and(&*v)
            .for_each(|p, &m, &v| {
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}
