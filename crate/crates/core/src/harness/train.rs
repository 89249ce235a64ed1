//! Training loops: the learned iterative policy and the fixed-policy
//! baselines, sharing one prediction network and evaluation path.
//!
//! An episode processes one graph: the bag starts as the original graph
//! alone; for each of the `t` steps the selection network scores the nodes
//! of the current bag and a root is sampled (straight-through at training
//! time, argmax at evaluation). The finished bag goes through the
//! prediction network and the task loss. Baselines skip the selection
//! network and take their roots from the named fixed policy. Each example
//! runs on its own tape; per-batch gradients are averaged and applied with
//! separate Adam states for the two networks.

use super::adam::{adam_step, AdamHyper, AdamState};
use super::dataset::{make_family_dataset, split_indices, Dataset};
use super::loss::{cross_entropy, mean_absolute_error};
use super::{Baseline, DataSource, ExperimentConfig, HarnessError, RunReport, Task};
use crate::bags::{covers_all_components, oracle_bag, SubgraphBag};
use crate::gnn::{
    predict, select_step, Marking, ParamBinding, PredictionNet, SelectMode, SelectionNet,
};
use crate::graph::{connected_components, Graph};
use crate::tape::Tape;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const SALT_DATA: u64 = 0xD5;
const SALT_SELECTION_INIT: u64 = 0xF0;
const SALT_PREDICTION_INIT: u64 = 0x60;
const SALT_EPOCH: u64 = 0xE000;
const SALT_EVAL: u64 = 0xA000;

fn derived_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Materialize the configured data source.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    match &cfg.data {
        DataSource::Family {
            n,
            skips,
            subset_size,
            copies,
        } => make_family_dataset(*n, skips, *subset_size, *copies, cfg.seed ^ SALT_DATA),
        DataSource::File { path } => {
            let text = std::fs::read_to_string(path)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

/// Trained networks plus the run report. The returned networks are the
/// best-evaluation checkpoint, not the last epoch's weights.
pub struct TrainOutcome {
    pub report: RunReport,
    pub selection: Option<SelectionNet>,
    pub prediction: PredictionNet,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrainOutcome, HarnessError> {
    let dataset = load_dataset(cfg)?;
    run_experiment_on(cfg, &dataset)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(HarnessError::InvalidConfig("dataset is empty".into()));
    }
    let started = std::time::Instant::now();
    let (train_ids, test_ids) = split_indices(dataset, cfg.seed);
    let in_channels = dataset.graphs[0].graph.feature_channels();
    let out_dim = match cfg.task {
        Task::Classification => dataset.classes.max(2),
        Task::Regression => 1,
    };
    let mut selection = (cfg.baseline == Baseline::PolicyLearn).then(|| {
        SelectionNet::new(
            &mut derived_rng(cfg.seed, SALT_SELECTION_INIT),
            in_channels,
            cfg.network.width,
            cfg.network.selection_layers,
            cfg.tau,
            cfg.logit_dropout,
        )
    });
    let mut prediction = PredictionNet::new(
        &mut derived_rng(cfg.seed, SALT_PREDICTION_INIT),
        in_channels,
        cfg.network.width,
        cfg.network.prediction_layers,
        out_dim,
    );
    let hyper = AdamHyper::with_learning_rate(cfg.learning_rate);
    let mut selection_state = AdamState::new();
    let mut prediction_state = AdamState::new();

    let metric_improves = |candidate: f64, best: f64| match cfg.task {
        Task::Classification => candidate > best,
        Task::Regression => candidate < best,
    };
    let mut best_metric = match cfg.task {
        Task::Classification => f64::NEG_INFINITY,
        Task::Regression => f64::INFINITY,
    };
    let mut best_epoch = 0;
    let mut best_coverage = 0.0;
    let mut best_histogram = Vec::new();
    let mut best_selection = selection.clone();
    let mut best_prediction = prediction.clone();
    let mut per_epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut coverage_total = 0.0;

    for epoch in 0..cfg.epochs {
        let mut epoch_rng = derived_rng(cfg.seed, SALT_EPOCH + epoch as u64);
        let mean_loss = train_epoch(
            cfg,
            dataset,
            &train_ids,
            &mut selection,
            &mut prediction,
            &mut selection_state,
            &mut prediction_state,
            &hyper,
            &mut epoch_rng,
        )?;
        per_epoch_loss.push(mean_loss);

        let stats = eval_pass(cfg, dataset, &test_ids, selection.as_ref(), &prediction, epoch as u64)?;
        coverage_total += stats.coverage;
        if metric_improves(stats.metric, best_metric) {
            best_metric = stats.metric;
            best_epoch = epoch;
            best_coverage = stats.coverage;
            best_histogram = stats.histogram.clone();
            best_selection = selection.clone();
            best_prediction = prediction.clone();
        }
        let metric_reached = cfg
            .target_metric
            .is_some_and(|target| !metric_improves(target, best_metric));
        let coverage_reached = cfg.target_coverage.is_none_or(|target| best_coverage >= target);
        if cfg.target_metric.is_some() && metric_reached && coverage_reached {
            break;
        }
    }
    let epochs_ran = per_epoch_loss.len();
    let report = RunReport {
        run_id: cfg.run_id(),
        baseline: cfg.baseline,
        t: cfg.t,
        seed: cfg.seed,
        epochs_ran,
        per_epoch_loss,
        best_epoch,
        final_metric: best_metric,
        coverage_rate: best_coverage,
        mean_coverage: coverage_total / epochs_ran as f64,
        selection_histogram: best_histogram,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        selection: best_selection,
        prediction: best_prediction,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_epoch(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    train_ids: &[usize],
    selection: &mut Option<SelectionNet>,
    prediction: &mut PredictionNet,
    selection_state: &mut AdamState,
    prediction_state: &mut AdamState,
    hyper: &AdamHyper,
    epoch_rng: &mut ChaCha8Rng,
) -> Result<f64, HarnessError> {
    let mut order = train_ids.to_vec();
    order.shuffle(epoch_rng);
    let mut loss_sum = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        let mut batch_grads: HashMap<String, Tensor> = HashMap::new();
        for &index in chunk {
            let item = &dataset.graphs[index];
            let (loss_value, grads) = train_example(
                cfg,
                &item.graph,
                item.label.unwrap_or_default(),
                selection.as_ref(),
                prediction,
                epoch_rng,
            )?;
            loss_sum += loss_value;
            for (path, grad) in grads {
                match batch_grads.get_mut(&path) {
                    Some(total) => {
                        for (t, g) in total.data_mut().iter_mut().zip(grad.data()) {
                            *t += g;
                        }
                    }
                    None => {
                        batch_grads.insert(path, grad);
                    }
                }
            }
        }
        let scale = 1.0 / chunk.len() as f64;
        for grad in batch_grads.values_mut() {
            for g in grad.data_mut() {
                *g *= scale;
            }
        }
        if let Some(f) = selection.as_mut() {
            let mut group: Vec<(String, &mut Tensor)> = f
                .params_mut()
                .into_iter()
                .map(|(path, tensor)| (format!("f/{path}"), tensor))
                .collect();
            adam_step(&mut group, &batch_grads, selection_state, hyper);
        }
        let mut group: Vec<(String, &mut Tensor)> = prediction
            .params_mut()
            .into_iter()
            .map(|(path, tensor)| (format!("g/{path}"), tensor))
            .collect();
        adam_step(&mut group, &batch_grads, prediction_state, hyper);
    }
    Ok(loss_sum / order.len() as f64)
}

fn train_example(
    cfg: &ExperimentConfig,
    graph: &Graph,
    label: f64,
    selection: Option<&SelectionNet>,
    prediction: &PredictionNet,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<(String, Tensor)>), HarnessError> {
    let mut tape = Tape::new();
    let handle = tape.register_graph(graph);
    let mut selection_binding = ParamBinding::default();
    let bound_selection = selection.map(|f| f.bind(&mut tape, "f", &mut selection_binding));
    let mut prediction_binding = ParamBinding::default();
    let bound_prediction = prediction.bind(&mut tape, "g", &mut prediction_binding);

    let mut markings = vec![Marking::Original];
    match &bound_selection {
        Some(bound) => {
            let mask = cfg.effective_mask_selected();
            let mut already = vec![false; graph.num_nodes()];
            for _ in 0..cfg.t {
                let outcome = select_step(
                    &mut tape,
                    graph,
                    handle,
                    &markings,
                    bound,
                    SelectMode::Train,
                    rng,
                    mask.then_some(already.as_slice()),
                )?;
                if mask {
                    already[outcome.node] = true;
                }
                markings.push(outcome.marking);
            }
        }
        None => {
            for root in fixed_policy_roots(cfg, graph, rng)? {
                markings.push(Marking::Root(root));
            }
        }
    }

    let output = predict(&mut tape, graph, handle, &markings, &bound_prediction)?;
    let loss = match cfg.task {
        Task::Classification => cross_entropy(&mut tape, output, label as usize)?,
        Task::Regression => mean_absolute_error(&mut tape, output, &Tensor::scalar(label))?,
    };
    let loss_value = tape.value(loss).item();
    let mut store = tape.backward(loss)?;
    let mut grads = selection_binding.collect_grads(&tape, &mut store);
    grads.extend(prediction_binding.collect_grads(&tape, &mut store));
    Ok((loss_value, grads))
}

/// Roots for the non-learned policies. `random` resamples every call (and
/// so every epoch); `full` and `oracle` are deterministic and never touch
/// the random stream.
fn fixed_policy_roots(
    cfg: &ExperimentConfig,
    graph: &Graph,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, HarnessError> {
    let n = graph.num_nodes();
    match cfg.baseline {
        Baseline::PolicyLearn => unreachable!("learned policy does not use fixed roots"),
        Baseline::Full => Ok((0..n).collect()),
        Baseline::Oracle => {
            let partition = connected_components(graph);
            Ok(oracle_bag(graph, &partition).roots().to_vec())
        }
        Baseline::Random => {
            if cfg.effective_mask_selected() {
                // Without replacement once masking is on, mirroring the
                // learned policy's masked sampling.
                let mut pool: Vec<usize> = (0..n).collect();
                for i in 0..cfg.t.min(n) {
                    let j = rng.random_range(i..n);
                    pool.swap(i, j);
                }
                pool.truncate(cfg.t.min(n));
                Ok(pool)
            } else {
                Ok((0..cfg.t).map(|_| rng.random_range(0..n)).collect())
            }
        }
    }
}

/// Evaluation metrics of one pass over `test_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    /// Accuracy for classification, mean absolute error for regression.
    pub metric: f64,
    /// Fraction of evaluation bags whose roots touch every component.
    pub coverage: f64,
    pub histogram: Vec<u64>,
    pub examples: usize,
}

fn eval_pass(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    test_ids: &[usize],
    selection: Option<&SelectionNet>,
    prediction: &PredictionNet,
    epoch: u64,
) -> Result<EvalStats, HarnessError> {
    let mut rng = derived_rng(cfg.seed, SALT_EVAL + epoch);
    let max_nodes = test_ids
        .iter()
        .map(|&i| dataset.graphs[i].graph.num_nodes())
        .max()
        .unwrap_or(0);
    let mut histogram = vec![0u64; max_nodes];
    let mut covered = 0usize;
    let mut correct = 0usize;
    let mut error_sum = 0.0;
    for &index in test_ids {
        let item = &dataset.graphs[index];
        let graph = &item.graph;
        let (roots, output) = eval_example(cfg, graph, selection, prediction, &mut rng)?;
        for &root in &roots {
            histogram[root] += 1;
        }
        let partition = connected_components(graph);
        let bag = SubgraphBag::new(graph, roots)?;
        if covers_all_components(&bag, &partition) {
            covered += 1;
        }
        let label = item.label.unwrap_or_default();
        match cfg.task {
            Task::Classification => {
                let predicted = output
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                if predicted == label as usize {
                    correct += 1;
                }
            }
            Task::Regression => error_sum += (output[0] - label).abs(),
        }
    }
    let examples = test_ids.len().max(1);
    let metric = match cfg.task {
        Task::Classification => correct as f64 / examples as f64,
        Task::Regression => error_sum / examples as f64,
    };
    Ok(EvalStats {
        metric,
        coverage: covered as f64 / examples as f64,
        histogram,
        examples: test_ids.len(),
    })
}

fn eval_example(
    cfg: &ExperimentConfig,
    graph: &Graph,
    selection: Option<&SelectionNet>,
    prediction: &PredictionNet,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<f64>), HarnessError> {
    let mut tape = Tape::new();
    let handle = tape.register_graph(graph);
    let mut markings = vec![Marking::Original];
    let mut roots = Vec::with_capacity(cfg.t);
    match selection {
        Some(f) => {
            let mut binding = ParamBinding::default();
            let bound = f.bind(&mut tape, "f", &mut binding);
            let mask = cfg.effective_mask_selected();
            let mut already = vec![false; graph.num_nodes()];
            for _ in 0..cfg.t {
                let outcome = select_step(
                    &mut tape,
                    graph,
                    handle,
                    &markings,
                    &bound,
                    SelectMode::Eval,
                    rng,
                    mask.then_some(already.as_slice()),
                )?;
                roots.push(outcome.node);
                if mask {
                    already[outcome.node] = true;
                }
                markings.push(outcome.marking);
            }
        }
        None => {
            roots = fixed_policy_roots(cfg, graph, rng)?;
            for &root in &roots {
                markings.push(Marking::Root(root));
            }
        }
    }
    let mut binding = ParamBinding::default();
    let bound_prediction = prediction.bind(&mut tape, "g", &mut binding);
    let output = predict(&mut tape, graph, handle, &markings, &bound_prediction)?;
    Ok((roots, tape.value(output).data().to_vec()))
}

/// Evaluate trained networks on a dataset (the `eval` subcommand).
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    selection: Option<&SelectionNet>,
    prediction: &PredictionNet,
    dataset: &Dataset,
) -> Result<EvalStats, HarnessError> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    eval_pass(cfg, dataset, &all, selection, prediction, 0)
}
