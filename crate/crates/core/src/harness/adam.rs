//! Adam optimizer over named parameter groups.
//!
//! The selection and prediction networks are trained with separate
//! optimizer instances, so moment estimates never mix across networks.
//! State is keyed by parameter path.

use crate::tensor::Tensor;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-group first/second moment estimates plus the shared step counter.
#[derive(Debug, Default, Clone)]
pub struct AdamState {
    step: u64,
    first: HashMap<String, Tensor>,
    second: HashMap<String, Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over the group. Parameters without a gradient entry are
/// treated as having a zero gradient.
pub fn adam_step(
    params: &mut [(String, &mut Tensor)],
    grads: &HashMap<String, Tensor>,
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);
    for (path, tensor) in params.iter_mut() {
        let (rows, cols) = tensor.shape();
        let m = state
            .first
            .entry(path.clone())
            .or_insert_with(|| Tensor::zeros(rows, cols));
        let v = state
            .second
            .entry(path.clone())
            .or_insert_with(|| Tensor::zeros(rows, cols));
        let zero = Tensor::zeros(rows, cols);
        let grad = grads.get(path).unwrap_or(&zero);
        debug_assert_eq!(grad.shape(), (rows, cols), "gradient shape for {path}");
        for i in 0..rows * cols {
            let g = grad.data()[i];
            let mi = hyper.beta1 * m.data()[i] + (1.0 - hyper.beta1) * g;
            let vi = hyper.beta2 * v.data()[i] + (1.0 - hyper.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            tensor.data_mut()[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
}
