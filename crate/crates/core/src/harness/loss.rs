//! Task losses recorded on the tape.

use crate::tape::{Tape, TapeError, Var};
use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Negative log-likelihood of `label` under `softmax(logits)`, computed via
/// log-softmax for stability.
pub fn cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var, LossError> {
    let classes = tape.value(logits).len();
    if label >= classes {
        return Err(LossError::LabelOutOfRange { label, classes });
    }
    let log_probs = tape.log_softmax(logits);
    let (rows, cols) = tape.value(log_probs).shape();
    let mut one_hot = Tensor::zeros(rows, cols);
    one_hot.data_mut()[label] = 1.0;
    let selector = tape.constant(one_hot);
    let picked = tape.mul(log_probs, selector)?;
    let picked_sum = tape.sum_all(picked);
    Ok(tape.neg(picked_sum))
}

/// Mean absolute error between a prediction and a constant target of the
/// same shape. The absolute value is composed as `relu(x) + relu(-x)`.
pub fn mean_absolute_error(tape: &mut Tape, prediction: Var, target: &Tensor) -> Result<Var, LossError> {
    let target_var = tape.constant(target.clone());
    let diff = tape.sub(prediction, target_var)?;
    let positive = tape.relu(diff);
    let negated = tape.neg(diff);
    let negative = tape.relu(negated);
    let magnitude = tape.add(positive, negative)?;
    let total = tape.sum_all(magnitude);
    Ok(tape.scale(total, 1.0 / target.len() as f64))
}
