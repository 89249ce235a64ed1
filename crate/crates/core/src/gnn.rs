//! Subgraph-GNN layers and the two networks built from them: a selection
//! network that scores the next root node to mark, and a prediction network
//! that consumes the final bag.
//!
//! Both networks process every subgraph independently with a decoupled
//! encoder: one message-passing track updates the markings, the other the
//! node features with the current marking concatenated in. After the last
//! layer the two tracks are added, node representations are pooled across
//! subgraphs, and a small MLP produces per-node logits (selection) or a
//! task output (prediction).
//!
//! Discrete root sampling uses the straight-through Gumbel-Softmax: the
//! forward pass commits to a hard one-hot marking while gradients flow
//! through the soft distribution, which is what lets the selection and
//! prediction networks train jointly from the task loss alone.

use crate::graph::Graph;
use crate::tape::{GraphHandle, Tape, TapeError, Var};
use crate::tensor::Tensor;
use rand::Rng;
use thiserror::Error;

/// Logit value used to exclude a node from sampling.
pub const MASKED_LOGIT: f64 = -1e9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GnnError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("temperature must be positive")]
    NonPositiveTemperature,
    #[error("every node is masked out")]
    AllMasked,
    #[error("a network needs at least one layer")]
    NoLayers,
}

/// Two linear layers with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

pub struct BoundMlp {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

impl Mlp {
    pub fn identity(channels: usize) -> Self {
        let mut eye = Tensor::zeros(channels, channels);
        for i in 0..channels {
            eye.set(i, i, 1.0);
        }
        Self {
            w1: eye.clone(),
            b1: Tensor::zeros(1, channels),
            w2: eye,
            b2: Tensor::zeros(1, channels),
        }
    }

    pub fn glorot(rng: &mut impl Rng, input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: glorot(rng, input, hidden),
            b1: Tensor::zeros(1, hidden),
            w2: glorot(rng, hidden, output),
            b2: Tensor::zeros(1, output),
        }
    }

    fn visit<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{path}/w1"), &self.w1));
        out.push((format!("{path}/b1"), &self.b1));
        out.push((format!("{path}/w2"), &self.w2));
        out.push((format!("{path}/b2"), &self.b2));
    }

    fn visit_mut<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{path}/w1"), &mut self.w1));
        out.push((format!("{path}/b1"), &mut self.b1));
        out.push((format!("{path}/w2"), &mut self.w2));
        out.push((format!("{path}/b2"), &mut self.b2));
    }

    fn bind(&self, tape: &mut Tape, path: &str, binding: &mut ParamBinding) -> BoundMlp {
        BoundMlp {
            w1: binding.bind(tape, format!("{path}/w1"), &self.w1),
            b1: binding.bind(tape, format!("{path}/b1"), &self.b1),
            w2: binding.bind(tape, format!("{path}/w2"), &self.w2),
            b2: binding.bind(tape, format!("{path}/b2"), &self.b2),
        }
    }
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, TapeError> {
        let h = tape.matmul(x, self.w1)?;
        let h = tape.add_row(h, self.b1)?;
        let h = tape.relu(h);
        let out = tape.matmul(h, self.w2)?;
        tape.add_row(out, self.b2)
    }
}

/// GIN update: `h' = MLP((1 + eps) * h + sum of neighbor rows)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GinLayer {
    pub epsilon: f64,
    pub mlp: Mlp,
}

/// GraphConv update: `h' = relu(h W_self + (A h) W_neigh + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvLayer {
    pub w_self: Tensor,
    pub w_neigh: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Gin(GinLayer),
    GraphConv(GraphConvLayer),
}

pub enum BoundLayer {
    Gin { epsilon: f64, mlp: BoundMlp },
    GraphConv { w_self: Var, w_neigh: Var, bias: Var },
}

impl Layer {
    pub fn gin(rng: &mut impl Rng, input: usize, output: usize) -> Self {
        Self::Gin(GinLayer {
            epsilon: 0.0,
            mlp: Mlp::glorot(rng, input, output, output),
        })
    }

    fn visit<'a>(&'a self, path: &str, out: &mut Vec<(String, &'a Tensor)>) {
        match self {
            Layer::Gin(layer) => layer.mlp.visit(&format!("{path}/mlp"), out),
            Layer::GraphConv(layer) => {
                out.push((format!("{path}/w_self"), &layer.w_self));
                out.push((format!("{path}/w_neigh"), &layer.w_neigh));
                out.push((format!("{path}/bias"), &layer.bias));
            }
        }
    }

    fn visit_mut<'a>(&'a mut self, path: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        match self {
            Layer::Gin(layer) => layer.mlp.visit_mut(&format!("{path}/mlp"), out),
            Layer::GraphConv(layer) => {
                out.push((format!("{path}/w_self"), &mut layer.w_self));
                out.push((format!("{path}/w_neigh"), &mut layer.w_neigh));
                out.push((format!("{path}/bias"), &mut layer.bias));
            }
        }
    }

    pub fn bind(&self, tape: &mut Tape, path: &str, binding: &mut ParamBinding) -> BoundLayer {
        match self {
            Layer::Gin(layer) => BoundLayer::Gin {
                epsilon: layer.epsilon,
                mlp: layer.mlp.bind(tape, &format!("{path}/mlp"), binding),
            },
            Layer::GraphConv(layer) => BoundLayer::GraphConv {
                w_self: binding.bind(tape, format!("{path}/w_self"), &layer.w_self),
                w_neigh: binding.bind(tape, format!("{path}/w_neigh"), &layer.w_neigh),
                bias: binding.bind(tape, format!("{path}/bias"), &layer.bias),
            },
        }
    }
}

impl BoundLayer {
    pub fn forward(&self, tape: &mut Tape, h: Var, graph: GraphHandle) -> Result<Var, TapeError> {
        match self {
            BoundLayer::Gin { epsilon, mlp } => {
                let aggregated = tape.neighbor_sum(h, graph)?;
                let scaled_self = tape.scale(h, 1.0 + epsilon);
                let combined = tape.add(aggregated, scaled_self)?;
                mlp.forward(tape, combined)
            }
            BoundLayer::GraphConv { w_self, w_neigh, bias } => {
                let own = tape.matmul(h, *w_self)?;
                let aggregated = tape.neighbor_sum(h, graph)?;
                let neigh = tape.matmul(aggregated, *w_neigh)?;
                let sum = tape.add(own, neigh)?;
                let sum = tape.add_row(sum, *bias)?;
                Ok(tape.relu(sum))
            }
        }
    }
}

/// Ordered record of every parameter bound to a tape for one pass.
#[derive(Default)]
pub struct ParamBinding {
    entries: Vec<(String, Var)>,
}

impl ParamBinding {
    pub fn bind(&mut self, tape: &mut Tape, path: String, tensor: &Tensor) -> Var {
        let var = tape.leaf(tensor.clone());
        self.entries.push((path, var));
        var
    }

    pub fn entries(&self) -> &[(String, Var)] {
        &self.entries
    }

    /// Gradients per parameter path; parameters the loss never reached get
    /// zero gradients of the right shape.
    pub fn collect_grads(
        &self,
        tape: &Tape,
        store: &mut crate::tape::GradStore,
    ) -> Vec<(String, Tensor)> {
        self.entries
            .iter()
            .map(|(path, var)| {
                let grad = store.take(*var).unwrap_or_else(|| {
                    let (rows, cols) = tape.value(*var).shape();
                    Tensor::zeros(rows, cols)
                });
                (path.clone(), grad)
            })
            .collect()
    }
}

/// How one subgraph in a bag is marked.
#[derive(Debug, Clone, Copy)]
pub enum Marking {
    /// The original graph: an all-zeros marking channel.
    Original,
    /// Hard root marking by node id.
    Root(usize),
    /// A sampled one-hot marking living on the tape (keeps the gradient
    /// path from later steps back into earlier selection logits).
    Soft(Var),
}

fn marking_column(tape: &mut Tape, n: usize, marking: &Marking) -> Var {
    match marking {
        Marking::Original => tape.constant(Tensor::zeros(n, 1)),
        Marking::Root(v) => {
            let mut column = Tensor::zeros(n, 1);
            column.set(*v, 0, 1.0);
            tape.constant(column)
        }
        Marking::Soft(var) => *var,
    }
}

/// Decoupled two-track forward over every subgraph in the bag.
///
/// Per subgraph the marking track starts from the root indicator column and
/// the feature track from the node features; each layer updates the marking
/// from itself and the features from themselves concatenated with the
/// previous marking. Returns the per-subgraph combined representation
/// (marking track plus feature track after the last layer).
pub fn ds_forward(
    tape: &mut Tape,
    graph: &Graph,
    handle: GraphHandle,
    markings: &[Marking],
    marking_layers: &[BoundLayer],
    feature_layers: &[BoundLayer],
) -> Result<Vec<Var>, GnnError> {
    if marking_layers.is_empty() || marking_layers.len() != feature_layers.len() {
        return Err(GnnError::NoLayers);
    }
    let n = graph.num_nodes();
    let features = tape.constant(Tensor::from_rows(graph.features()));
    let mut outputs = Vec::with_capacity(markings.len());
    for marking in markings {
        let mut p = marking_column(tape, n, marking);
        let mut h = features;
        for (fp, fh) in marking_layers.iter().zip(feature_layers) {
            let joint = tape.concat_cols(h, p)?;
            let next_h = fh.forward(tape, joint, handle)?;
            let next_p = fp.forward(tape, p, handle)?;
            p = next_p;
            h = next_h;
        }
        outputs.push(tape.add(p, h)?);
    }
    Ok(outputs)
}

/// Single-track forward used by the constructive-proof nets: every subgraph
/// starts from `(1, root indicator)` rows and runs the same layer stack.
pub fn ds_forward_single(
    tape: &mut Tape,
    graph: &Graph,
    handle: GraphHandle,
    markings: &[Marking],
    layers: &[BoundLayer],
) -> Result<Vec<Var>, GnnError> {
    if layers.is_empty() {
        return Err(GnnError::NoLayers);
    }
    let n = graph.num_nodes();
    let ones = tape.constant(Tensor::from_shape(n, 1, vec![1.0; n]));
    let mut outputs = Vec::with_capacity(markings.len());
    for marking in markings {
        let indicator = marking_column(tape, n, marking);
        let mut h = tape.concat_cols(ones, indicator)?;
        for layer in layers {
            h = layer.forward(tape, h, handle)?;
        }
        outputs.push(h);
    }
    Ok(outputs)
}

/// Selection network: decoupled encoder stacks plus a head MLP that reduces
/// the pooled node representation to a single score per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionNet {
    pub marking_layers: Vec<Layer>,
    pub feature_layers: Vec<Layer>,
    pub head: Mlp,
    pub tau: f64,
    pub logit_dropout: f64,
}

pub struct BoundSelectionNet {
    pub marking_layers: Vec<BoundLayer>,
    pub feature_layers: Vec<BoundLayer>,
    pub head: BoundMlp,
    pub tau: f64,
    pub logit_dropout: f64,
}

impl SelectionNet {
    /// GIN-encoder selection network with both tracks at a common width.
    pub fn new(
        rng: &mut impl Rng,
        in_channels: usize,
        width: usize,
        layers: usize,
        tau: f64,
        logit_dropout: f64,
    ) -> Self {
        assert!(layers >= 1, "selection network needs at least one layer");
        assert!(tau > 0.0, "temperature must be positive");
        assert!((0.0..1.0).contains(&logit_dropout), "dropout must be in [0, 1)");
        let mut marking_layers = Vec::with_capacity(layers);
        let mut feature_layers = Vec::with_capacity(layers);
        for l in 0..layers {
            let p_in = if l == 0 { 1 } else { width };
            let h_in = if l == 0 { in_channels + 1 } else { width + width };
            marking_layers.push(Layer::gin(rng, p_in, width));
            feature_layers.push(Layer::gin(rng, h_in, width));
        }
        Self {
            marking_layers,
            feature_layers,
            head: Mlp::glorot(rng, width, width, 1),
            tau,
            logit_dropout,
        }
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str, binding: &mut ParamBinding) -> BoundSelectionNet {
        BoundSelectionNet {
            marking_layers: bind_layers(&self.marking_layers, tape, &format!("{prefix}/p"), binding),
            feature_layers: bind_layers(&self.feature_layers, tape, &format!("{prefix}/h"), binding),
            head: self.head.bind(tape, &format!("{prefix}/head"), binding),
            tau: self.tau,
            logit_dropout: self.logit_dropout,
        }
    }

    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.marking_layers.iter().enumerate() {
            layer.visit(&format!("p/{l}"), &mut out);
        }
        for (l, layer) in self.feature_layers.iter().enumerate() {
            layer.visit(&format!("h/{l}"), &mut out);
        }
        self.head.visit("head", &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.marking_layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("p/{l}"), &mut out);
        }
        for (l, layer) in self.feature_layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("h/{l}"), &mut out);
        }
        self.head.visit_mut("head", &mut out);
        out
    }
}

fn bind_layers(
    layers: &[Layer],
    tape: &mut Tape,
    prefix: &str,
    binding: &mut ParamBinding,
) -> Vec<BoundLayer> {
    layers
        .iter()
        .enumerate()
        .map(|(l, layer)| layer.bind(tape, &format!("{prefix}/{l}"), binding))
        .collect()
}

/// Prediction network: same encoder structure with its own weights, plus a
/// readout MLP applied after pooling over subgraphs and nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionNet {
    pub marking_layers: Vec<Layer>,
    pub feature_layers: Vec<Layer>,
    pub readout: Mlp,
}

pub struct BoundPredictionNet {
    pub marking_layers: Vec<BoundLayer>,
    pub feature_layers: Vec<BoundLayer>,
    pub readout: BoundMlp,
}

impl PredictionNet {
    pub fn new(
        rng: &mut impl Rng,
        in_channels: usize,
        width: usize,
        layers: usize,
        out_dim: usize,
    ) -> Self {
        assert!(layers >= 1, "prediction network needs at least one layer");
        let mut marking_layers = Vec::with_capacity(layers);
        let mut feature_layers = Vec::with_capacity(layers);
        for l in 0..layers {
            let p_in = if l == 0 { 1 } else { width };
            let h_in = if l == 0 { in_channels + 1 } else { width + width };
            marking_layers.push(Layer::gin(rng, p_in, width));
            feature_layers.push(Layer::gin(rng, h_in, width));
        }
        Self {
            marking_layers,
            feature_layers,
            readout: Mlp::glorot(rng, width, width, out_dim),
        }
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str, binding: &mut ParamBinding) -> BoundPredictionNet {
        BoundPredictionNet {
            marking_layers: bind_layers(&self.marking_layers, tape, &format!("{prefix}/p"), binding),
            feature_layers: bind_layers(&self.feature_layers, tape, &format!("{prefix}/h"), binding),
            readout: self.readout.bind(tape, &format!("{prefix}/readout"), binding),
        }
    }

    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.marking_layers.iter().enumerate() {
            layer.visit(&format!("p/{l}"), &mut out);
        }
        for (l, layer) in self.feature_layers.iter().enumerate() {
            layer.visit(&format!("h/{l}"), &mut out);
        }
        self.readout.visit("readout", &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.marking_layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("p/{l}"), &mut out);
        }
        for (l, layer) in self.feature_layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("h/{l}"), &mut out);
        }
        self.readout.visit_mut("readout", &mut out);
        out
    }
}

/// Per-node scores for the next root: pool the per-subgraph representations
/// across the bag with a mean, then reduce channels to one.
pub fn selection_logits(
    tape: &mut Tape,
    graph: &Graph,
    handle: GraphHandle,
    markings: &[Marking],
    net: &BoundSelectionNet,
) -> Result<Var, GnnError> {
    let outputs = ds_forward(
        tape,
        graph,
        handle,
        markings,
        &net.marking_layers,
        &net.feature_layers,
    )?;
    let pooled = tape.mean_stack(&outputs)?;
    Ok(net.head.forward(tape, pooled)?)
}

/// Task output for a bag: mean over subgraphs, mean over nodes, readout MLP.
pub fn predict(
    tape: &mut Tape,
    graph: &Graph,
    handle: GraphHandle,
    markings: &[Marking],
    net: &BoundPredictionNet,
) -> Result<Var, GnnError> {
    let outputs = ds_forward(
        tape,
        graph,
        handle,
        markings,
        &net.marking_layers,
        &net.feature_layers,
    )?;
    let pooled = tape.mean_stack(&outputs)?;
    let graph_repr = tape.mean_axis0(pooled);
    Ok(net.readout.forward(tape, graph_repr)?)
}

/// Standard Gumbel draws `-ln(-ln u)`, one per node.
pub fn gumbel_noise(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Straight-through Gumbel-Softmax with caller-provided noise.
///
/// Masked logits are clamped to [`MASKED_LOGIT`] before the noise is added;
/// the soft distribution is `softmax((logits + noise) / tau)` over the
/// remaining nodes. The forward value is the hard one-hot of the argmax
/// (lowest id on exact ties); gradients flow as if the output were the soft
/// distribution.
pub fn gumbel_softmax_st_with_noise(
    tape: &mut Tape,
    logits: Var,
    tau: f64,
    noise: &[f64],
    excluded: Option<&[bool]>,
) -> Result<(Var, usize), GnnError> {
    if tau <= 0.0 {
        return Err(GnnError::NonPositiveTemperature);
    }
    let n = tape.value(logits).len();
    if let Some(mask) = excluded {
        if mask.iter().all(|&m| m) {
            return Err(GnnError::AllMasked);
        }
    }
    let mask_offsets: Vec<f64> = (0..n)
        .map(|i| {
            if excluded.is_some_and(|mask| mask[i]) {
                MASKED_LOGIT
            } else {
                0.0
            }
        })
        .collect();
    let offsets = tape.constant(Tensor::from_shape(n, 1, mask_offsets));
    let masked = tape.add(logits, offsets)?;
    let noise_var = tape.constant(Tensor::from_shape(n, 1, noise.to_vec()));
    let perturbed = tape.add(masked, noise_var)?;
    let scaled = tape.scale(perturbed, 1.0 / tau);
    let soft = tape.softmax(scaled);
    let winner = argmax(tape.value(scaled).data());
    let hard = tape.straight_through_one_hot(soft, winner)?;
    Ok((hard, winner))
}

/// Straight-through Gumbel-Softmax with fresh noise from `rng`.
pub fn gumbel_softmax_st(
    tape: &mut Tape,
    logits: Var,
    tau: f64,
    rng: &mut impl Rng,
    excluded: Option<&[bool]>,
) -> Result<(Var, usize), GnnError> {
    let n = tape.value(logits).len();
    let noise = gumbel_noise(rng, n);
    gumbel_softmax_st_with_noise(tape, logits, tau, &noise, excluded)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Train,
    Eval,
}

/// Result of one selection step: the chosen root and the marking to carry
/// into the next forward (soft in training so gradients keep flowing, hard
/// at evaluation).
pub struct SelectOutcome {
    pub node: usize,
    pub marking: Marking,
}

/// One step of the iterative policy: score nodes from the current bag, then
/// pick the next root.
///
/// Training samples via straight-through Gumbel-Softmax after applying logit
/// dropout (each node excluded with the configured probability; the mask is
/// resampled if it would exclude everything). Evaluation takes the plain
/// argmax of the logits, lowest id on exact ties. Nodes in `already`
/// stay excluded in both modes.
pub fn select_step(
    tape: &mut Tape,
    graph: &Graph,
    handle: GraphHandle,
    markings: &[Marking],
    net: &BoundSelectionNet,
    mode: SelectMode,
    rng: &mut impl Rng,
    already: Option<&[bool]>,
) -> Result<SelectOutcome, GnnError> {
    let logits = selection_logits(tape, graph, handle, markings, net)?;
    let n = graph.num_nodes();
    if let Some(mask) = already {
        if mask.iter().all(|&m| m) {
            return Err(GnnError::AllMasked);
        }
    }
    match mode {
        SelectMode::Eval => {
            let values = tape.value(logits).data();
            let mut best: Option<usize> = None;
            for v in 0..n {
                if already.is_some_and(|mask| mask[v]) {
                    continue;
                }
                if best.is_none_or(|b| values[v] > values[b]) {
                    best = Some(v);
                }
            }
            let node = best.expect("at least one unmasked node");
            Ok(SelectOutcome {
                node,
                marking: Marking::Root(node),
            })
        }
        SelectMode::Train => {
            let mut excluded = vec![false; n];
            if let Some(mask) = already {
                excluded.copy_from_slice(mask);
            }
            if net.logit_dropout > 0.0 {
                loop {
                    let mut candidate = excluded.clone();
                    for slot in candidate.iter_mut() {
                        if !*slot && rng.random::<f64>() < net.logit_dropout {
                            *slot = true;
                        }
                    }
                    if !candidate.iter().all(|&m| m) {
                        excluded = candidate;
                        break;
                    }
                }
            }
            let (hard, node) = gumbel_softmax_st(tape, logits, net.tau, rng, Some(&excluded))?;
            Ok(SelectOutcome {
                node,
                marking: Marking::Soft(hard),
            })
        }
    }
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random::<f64>() * 2.0 * bound - bound)
        .collect();
    Tensor::from_shape(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{csl, csl_union, Graph};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn identity_gin(channels: usize) -> Layer {
        Layer::Gin(GinLayer {
            epsilon: 0.0,
            mlp: Mlp::identity(channels),
        })
    }

    fn bind_single(tape: &mut Tape, layer: &Layer) -> BoundLayer {
        let mut binding = ParamBinding::default();
        layer.bind(tape, "layer", &mut binding)
    }

    #[test]
    fn gin_on_regular_graph_with_identity_mlp() {
        let g = csl(13, 5).unwrap();
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let bound = bind_single(&mut tape, &identity_gin(1));
        let h = tape.constant(Tensor::from_shape(13, 1, vec![1.0; 13]));
        let out = bound.forward(&mut tape, h, handle).unwrap();
        assert!(tape.value(out).data().iter().all(|&x| x == 5.0));
    }

    #[test]
    fn gin_on_edgeless_graph_is_identity() {
        let g = Graph::with_unit_features(4, &[]).unwrap();
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let bound = bind_single(&mut tape, &identity_gin(1));
        let h = tape.constant(Tensor::from_shape(4, 1, vec![1.0; 4]));
        let out = bound.forward(&mut tape, h, handle).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0; 4]);
    }

    #[test]
    fn gin_is_permutation_equivariant_bitwise() {
        let g = csl(13, 3).unwrap();
        let perm: Vec<usize> = (0..13).map(|v| (v * 4 + 9) % 13).collect();
        let permuted = g.relabeled(&perm).unwrap();
        let layer = Layer::gin(&mut rng(5), 1, 3);

        let features: Vec<f64> = (0..13).map(|v| (v as f64) * 0.37 - 1.1).collect();
        let mut permuted_features = vec![0.0; 13];
        for v in 0..13 {
            permuted_features[perm[v]] = features[v];
        }

        let mut tape_a = Tape::new();
        let ha = tape_a.register_graph(&g);
        let ba = bind_single(&mut tape_a, &layer);
        let xa = tape_a.constant(Tensor::from_shape(13, 1, features.clone()));
        let out_a = ba.forward(&mut tape_a, xa, ha).unwrap();

        let mut tape_b = Tape::new();
        let hb = tape_b.register_graph(&permuted);
        let bb = bind_single(&mut tape_b, &layer);
        let xb = tape_b.constant(Tensor::from_shape(13, 1, permuted_features));
        let out_b = bb.forward(&mut tape_b, xb, hb).unwrap();

        for v in 0..13 {
            for c in 0..3 {
                assert_eq!(
                    tape_a.value(out_a).get(v, c).to_bits(),
                    tape_b.value(out_b).get(perm[v], c).to_bits(),
                    "node {v} channel {c}"
                );
            }
        }
    }

    #[test]
    fn graphconv_first_layer_of_the_degree_construction() {
        // Weights that compute (degree - d, root indicator) per node.
        let d = 3.0;
        let layer = Layer::GraphConv(GraphConvLayer {
            w_self: Tensor::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]),
            w_neigh: Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
            bias: Tensor::row(&[-d, 0.0]),
        });
        let g = csl(13, 5).unwrap();
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let bound = bind_single(&mut tape, &layer);
        // Input rows (1, root indicator) with root = 2.
        let mut rows = vec![vec![1.0, 0.0]; 13];
        rows[2][1] = 1.0;
        let h = tape.constant(Tensor::from_rows(&rows));
        let out = bound.forward(&mut tape, h, handle).unwrap();
        for v in 0..13 {
            assert_eq!(tape.value(out).get(v, 0), 4.0 - d, "degree channel, node {v}");
            assert_eq!(tape.value(out).get(v, 1), if v == 2 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn graphconv_zero_weights_give_zeros_and_identity_passes_through() {
        let g = csl(13, 5).unwrap();
        let zero = Layer::GraphConv(GraphConvLayer {
            w_self: Tensor::zeros(1, 1),
            w_neigh: Tensor::zeros(1, 1),
            bias: Tensor::zeros(1, 1),
        });
        let identity = Layer::GraphConv(GraphConvLayer {
            w_self: Tensor::from_rows(&[vec![1.0]]),
            w_neigh: Tensor::zeros(1, 1),
            bias: Tensor::zeros(1, 1),
        });
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let bz = bind_single(&mut tape, &zero);
        let bi = bind_single(&mut tape, &identity);
        let input: Vec<f64> = (0..13).map(|v| v as f64 * 0.25).collect();
        let h = tape.constant(Tensor::from_shape(13, 1, input.clone()));
        let out_zero = bz.forward(&mut tape, h, handle).unwrap();
        assert!(tape.value(out_zero).data().iter().all(|&x| x == 0.0));
        let out_id = bi.forward(&mut tape, h, handle).unwrap();
        assert_eq!(tape.value(out_id).data(), input.as_slice());
    }

    fn small_selection_net(seed: u64) -> SelectionNet {
        SelectionNet::new(&mut rng(seed), 1, 4, 2, 1.0, 0.0)
    }

    #[test]
    fn bag_of_only_the_original_graph_gives_equal_logits() {
        let g = csl_union(13, &[3, 5]).unwrap();
        let net = small_selection_net(3);
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let mut binding = ParamBinding::default();
        let bound = net.bind(&mut tape, "f", &mut binding);
        let logits = selection_logits(&mut tape, &g, handle, &[Marking::Original], &bound).unwrap();
        let values = tape.value(logits).data();
        for &v in &values[1..] {
            assert_eq!(v.to_bits(), values[0].to_bits());
        }
    }

    #[test]
    fn selection_logits_are_permutation_equivariant() {
        let g = csl_union(13, &[3, 5]).unwrap();
        let n = 26;
        let perm: Vec<usize> = (0..n).map(|v| (v * 7 + 11) % n).collect();
        let permuted = g.relabeled(&perm).unwrap();
        let net = small_selection_net(17);

        let mut tape_a = Tape::new();
        let ha = tape_a.register_graph(&g);
        let mut binding_a = ParamBinding::default();
        let bound_a = net.bind(&mut tape_a, "f", &mut binding_a);
        let logits_a =
            selection_logits(&mut tape_a, &g, ha, &[Marking::Original, Marking::Root(4)], &bound_a)
                .unwrap();

        let mut tape_b = Tape::new();
        let hb = tape_b.register_graph(&permuted);
        let mut binding_b = ParamBinding::default();
        let bound_b = net.bind(&mut tape_b, "f", &mut binding_b);
        let logits_b = selection_logits(
            &mut tape_b,
            &permuted,
            hb,
            &[Marking::Original, Marking::Root(perm[4])],
            &bound_b,
        )
        .unwrap();

        for v in 0..n {
            assert_eq!(
                tape_a.value(logits_a).get(v, 0).to_bits(),
                tape_b.value(logits_b).get(perm[v], 0).to_bits(),
                "node {v}"
            );
        }
    }

    #[test]
    fn marking_breaks_symmetry_in_ds_forward() {
        let g = csl(13, 5).unwrap();
        let net = small_selection_net(11);
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let mut binding = ParamBinding::default();
        let bound = net.bind(&mut tape, "f", &mut binding);
        let outs = ds_forward(
            &mut tape,
            &g,
            handle,
            &[Marking::Root(0)],
            &bound.marking_layers,
            &bound.feature_layers,
        )
        .unwrap();
        let value = tape.value(outs[0]);
        let marked_row: Vec<f64> = value.row_slice(0).to_vec();
        let other_row: Vec<f64> = value.row_slice(6).to_vec();
        assert_ne!(marked_row, other_row);
    }

    #[test]
    fn swapping_bag_entries_leaves_pooled_logits_unchanged() {
        let g = csl_union(13, &[3, 5]).unwrap();
        let net = small_selection_net(23);
        let eval = |order: [Marking; 3]| {
            let mut tape = Tape::new();
            let handle = tape.register_graph(&g);
            let mut binding = ParamBinding::default();
            let bound = net.bind(&mut tape, "f", &mut binding);
            let logits = selection_logits(&mut tape, &g, handle, &order, &bound).unwrap();
            tape.value(logits).data().to_vec()
        };
        let a = eval([Marking::Original, Marking::Root(2), Marking::Root(20)]);
        let b = eval([Marking::Original, Marking::Root(20), Marking::Root(2)]);
        assert_eq!(a, b);
    }

    #[test]
    fn predict_is_deterministic_and_root_order_invariant() {
        let g = csl_union(13, &[3, 5]).unwrap();
        let net = PredictionNet::new(&mut rng(31), 1, 4, 2, 3);
        let eval = |markings: &[Marking]| {
            let mut tape = Tape::new();
            let handle = tape.register_graph(&g);
            let mut binding = ParamBinding::default();
            let bound = net.bind(&mut tape, "g", &mut binding);
            let out = predict(&mut tape, &g, handle, markings, &bound).unwrap();
            tape.value(out).data().to_vec()
        };
        let a = eval(&[Marking::Original, Marking::Root(1), Marking::Root(15)]);
        let b = eval(&[Marking::Original, Marking::Root(1), Marking::Root(15)]);
        assert_eq!(a, b);
        let c = eval(&[Marking::Original, Marking::Root(15), Marking::Root(1)]);
        assert_eq!(a, c);
    }

    #[test]
    fn isomorphic_roots_give_equal_predictions() {
        // Nodes 0 and 7 of one circulant graph are related by rotation.
        let g = csl(13, 5).unwrap();
        let net = PredictionNet::new(&mut rng(37), 1, 4, 2, 2);
        let eval = |root: usize| {
            let mut tape = Tape::new();
            let handle = tape.register_graph(&g);
            let mut binding = ParamBinding::default();
            let bound = net.bind(&mut tape, "g", &mut binding);
            let out = predict(&mut tape, &g, handle, &[Marking::Original, Marking::Root(root)], &bound)
                .unwrap();
            tape.value(out).data().to_vec()
        };
        let a = eval(0);
        let b = eval(7);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn gumbel_masking_and_errors() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::column(&[0.3, 0.1, 0.9, 0.2]));
        let mut r = rng(1);
        let only_node_3 = vec![true, true, true, false];
        let (hard, node) =
            gumbel_softmax_st(&mut tape, logits, 1.0, &mut r, Some(&only_node_3)).unwrap();
        assert_eq!(node, 3);
        assert_eq!(tape.value(hard).data(), &[0.0, 0.0, 0.0, 1.0]);
        let all = vec![true; 4];
        assert_eq!(
            gumbel_softmax_st(&mut tape, logits, 1.0, &mut r, Some(&all)).unwrap_err(),
            GnnError::AllMasked
        );
        assert_eq!(
            gumbel_softmax_st(&mut tape, logits, 0.0, &mut r, None).unwrap_err(),
            GnnError::NonPositiveTemperature
        );
    }

    #[test]
    fn gumbel_argmax_law_matches_softmax_of_logits() {
        // Selection frequencies follow softmax(logits) regardless of tau.
        let logit_values = [0.0f64, (2.0f64).ln(), (3.0f64).ln()];
        let expected = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        let draws = 40_000;
        let mut r = rng(99);
        for tau in [0.33, 2.0] {
            let mut counts = [0u64; 3];
            for _ in 0..draws {
                let mut tape = Tape::new();
                let logits = tape.constant(Tensor::column(&logit_values));
                let (_, node) = gumbel_softmax_st(&mut tape, logits, tau, &mut r, None).unwrap();
                counts[node] += 1;
            }
            for i in 0..3 {
                let observed = counts[i] as f64 / draws as f64;
                let sigma = (expected[i] * (1.0 - expected[i]) / draws as f64).sqrt();
                assert!(
                    (observed - expected[i]).abs() <= 5.0 * sigma,
                    "tau {tau} node {i}: {observed} vs {}",
                    expected[i]
                );
            }
        }
    }

    #[test]
    fn eval_select_step_takes_argmax_with_low_tie_break() {
        let g = csl(13, 5).unwrap();
        // Force known logits through a handcrafted head: weights zero, so
        // logits equal the head bias; all ties resolve to node 0.
        let net = small_selection_net(7);
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let mut binding = ParamBinding::default();
        let bound = net.bind(&mut tape, "f", &mut binding);
        let outcome = select_step(
            &mut tape,
            &g,
            handle,
            &[Marking::Original],
            &bound,
            SelectMode::Eval,
            &mut rng(0),
            None,
        )
        .unwrap();
        // All logits are exactly equal on the unmarked bag.
        assert_eq!(outcome.node, 0);
    }

    #[test]
    fn train_select_step_is_deterministic_per_seed() {
        let g = csl_union(13, &[3, 5]).unwrap();
        let net = SelectionNet::new(&mut rng(41), 1, 4, 2, 0.66, 0.3);
        let run = |seed: u64| {
            let mut tape = Tape::new();
            let handle = tape.register_graph(&g);
            let mut binding = ParamBinding::default();
            let bound = net.bind(&mut tape, "f", &mut binding);
            let mut r = rng(seed);
            select_step(
                &mut tape,
                &g,
                handle,
                &[Marking::Original],
                &bound,
                SelectMode::Train,
                &mut r,
                None,
            )
            .unwrap()
            .node
        };
        assert_eq!(run(12), run(12));
    }

    #[test]
    fn binding_paths_match_param_paths() {
        let net = small_selection_net(2);
        let mut tape = Tape::new();
        let mut binding = ParamBinding::default();
        let _ = net.bind(&mut tape, "f", &mut binding);
        let bound_paths: Vec<String> = binding
            .entries()
            .iter()
            .map(|(path, _)| path.clone())
            .collect();
        let param_paths: Vec<String> = net
            .params()
            .into_iter()
            .map(|(path, _)| format!("f/{path}"))
            .collect();
        assert_eq!(bound_paths, param_paths);
    }

    #[test]
    fn channel_plan_mismatch_is_reported() {
        let g = csl(13, 5).unwrap();
        let mut bad = small_selection_net(4);
        // Feature track of layer 0 expects in_channels + 1 columns.
        bad.feature_layers[0] = Layer::gin(&mut rng(0), 5, 4);
        let mut tape = Tape::new();
        let handle = tape.register_graph(&g);
        let mut binding = ParamBinding::default();
        let bound = bad.bind(&mut tape, "f", &mut binding);
        let result = selection_logits(&mut tape, &g, handle, &[Marking::Original], &bound);
        assert!(matches!(result, Err(GnnError::Tape(TapeError::ShapeMismatch { .. }))));
    }
}
