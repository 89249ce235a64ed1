//! Experiment harness: configuration, datasets, optimizer, losses, the
//! training loops for the learned policy and the fixed-policy baselines,
//! and result persistence.

pub mod adam;
pub mod dataset;
pub mod loss;
pub mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use dataset::{make_family_dataset, split_indices, Dataset};
pub use loss::{cross_entropy, mean_absolute_error};
pub use train::{evaluate_checkpoint, run_experiment, run_experiment_on, TrainOutcome};

use crate::gnn::{PredictionNet, SelectionNet};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Bag(#[from] crate::bags::BagError),
    #[error(transparent)]
    Gnn(#[from] crate::gnn::GnnError),
    #[error(transparent)]
    Tape(#[from] crate::tape::TapeError),
    #[error(transparent)]
    Loss(#[from] loss::LossError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("checkpoint is missing parameter {0}")]
    MissingParameter(String),
    #[error("checkpoint parameter {path} has shape {got:?}, expected {expected:?}")]
    CheckpointShape {
        path: String,
        got: (usize, usize),
        expected: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    PolicyLearn,
    Random,
    Full,
    Oracle,
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Baseline::PolicyLearn => "policy-learn",
            Baseline::Random => "random",
            Baseline::Full => "full",
            Baseline::Oracle => "oracle",
        };
        f.write_str(name)
    }
}

/// Where the labeled graphs come from: generated on the fly from a family
/// description, or loaded from a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Family {
        n: usize,
        skips: Vec<usize>,
        subset_size: usize,
        copies: usize,
    },
    File {
        path: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub selection_layers: usize,
    pub prediction_layers: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Number of selected subgraphs per bag (the original graph is always
    /// included on top).
    pub t: usize,
    pub data: DataSource,
    pub network: NetworkPlan,
    pub tau: f64,
    pub logit_dropout: f64,
    /// Mask already-selected nodes during selection. Defaults to off for
    /// small `t` and on from five selections up.
    #[serde(default)]
    pub mask_selected: Option<bool>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub baseline: Baseline,
    /// Optional early stop: finish once the evaluation metric and coverage
    /// both reach their targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_coverage: Option<f64>,
}

impl ExperimentConfig {
    /// Classification run on the three-member two-component family; the
    /// starting point for the runnable examples and tests.
    pub fn family_default(baseline: Baseline, seed: u64) -> Self {
        Self {
            task: Task::Classification,
            t: 2,
            data: DataSource::Family {
                n: 13,
                skips: vec![2, 3, 5],
                subset_size: 2,
                copies: 10,
            },
            network: NetworkPlan {
                selection_layers: 2,
                prediction_layers: 2,
                width: 16,
            },
            tau: 0.66,
            logit_dropout: 0.3,
            mask_selected: None,
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 8,
            seed,
            baseline,
            target_metric: None,
            target_coverage: None,
        }
    }

    pub fn effective_mask_selected(&self) -> bool {
        self.mask_selected.unwrap_or(self.t >= 5)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs == 0 {
            return Err(HarnessError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(HarnessError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.tau <= 0.0 {
            return Err(HarnessError::InvalidConfig("tau must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.logit_dropout) {
            return Err(HarnessError::InvalidConfig("logit dropout must be in [0, 1)".into()));
        }
        if self.network.selection_layers == 0 || self.network.prediction_layers == 0 {
            return Err(HarnessError::InvalidConfig("networks need at least one layer".into()));
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        format!("{}-t{}-seed{}", self.baseline, self.t, self.seed)
    }
}

/// Diagnostics and metrics of one run. The wall time is informational and
/// excluded from serialization so that reports are byte-identical across
/// repeated runs of the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub baseline: Baseline,
    pub t: usize,
    pub seed: u64,
    pub epochs_ran: usize,
    pub per_epoch_loss: Vec<f64>,
    pub best_epoch: usize,
    /// Evaluation metric at the best epoch: accuracy for classification,
    /// mean absolute error for regression.
    pub final_metric: f64,
    /// Component-coverage rate of the evaluation bags at the best epoch.
    pub coverage_rate: f64,
    /// Mean evaluation coverage across all epochs.
    pub mean_coverage: f64,
    /// How often each node id was selected during evaluation at the best
    /// epoch.
    pub selection_histogram: Vec<u64>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

pub const CSV_HEADER: &str = "run_id,baseline,T,metric,coverage,seed";

pub fn csv_row(report: &RunReport) -> String {
    format!(
        "{},{},{},{},{},{}",
        report.run_id, report.baseline, report.t, report.final_metric, report.coverage_rate, report.seed
    )
}

/// Checkpoint: a flat JSON object mapping parameter paths to tensors.
pub fn checkpoint_json(
    selection: Option<&SelectionNet>,
    prediction: &PredictionNet,
) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    if let Some(f) = selection {
        for (path, tensor) in f.params() {
            map.insert(format!("f/{path}"), serde_json::to_value(tensor).expect("tensor json"));
        }
    }
    for (path, tensor) in prediction.params() {
        map.insert(format!("g/{path}"), serde_json::to_value(tensor).expect("tensor json"));
    }
    serde_json::Value::Object(map)
}

fn restore_group(
    value: &serde_json::Value,
    prefix: &str,
    params: Vec<(String, &mut Tensor)>,
) -> Result<(), HarnessError> {
    for (path, tensor) in params {
        let key = format!("{prefix}/{path}");
        let entry = value
            .get(&key)
            .ok_or_else(|| HarnessError::MissingParameter(key.clone()))?;
        let loaded: Tensor = serde_json::from_value(entry.clone())?;
        if loaded.shape() != tensor.shape() {
            return Err(HarnessError::CheckpointShape {
                path: key,
                got: loaded.shape(),
                expected: tensor.shape(),
            });
        }
        *tensor = loaded;
    }
    Ok(())
}

/// Load tensors from a checkpoint into already-constructed networks.
pub fn apply_checkpoint(
    value: &serde_json::Value,
    selection: Option<&mut SelectionNet>,
    prediction: &mut PredictionNet,
) -> Result<(), HarnessError> {
    if let Some(f) = selection {
        restore_group(value, "f", f.params_mut())?;
    }
    restore_group(value, "g", prediction.params_mut())
}
