//! Executable versions of the constructive policy results, plus the check
//! suites behind the `verify` CLI subcommand.
//!
//! Two constructions are made runnable here. First, an explicit four-layer
//! GraphConv weight assignment whose pooled output scores a node 1.0 exactly
//! when its degree exceeds a threshold and it has not been selected yet; all
//! arithmetic stays in small integers, so the scores are bit-exact. Second,
//! a refinement-oracle selector that realizes the idealized policy: nodes
//! whose stable color reveals membership in an already-marked component are
//! excluded, and the next root is drawn uniformly from the rest.

use crate::bags::{identifies, random_bag, SubgraphBag};
use crate::gnn::{ds_forward_single, BoundLayer, GraphConvLayer, Layer, Marking, ParamBinding};
use crate::graph::{connected_components, csl_union, Graph};
use crate::policy::{expected_draws_exact, expected_draws_mc, success_probability_exact, success_probability_mc};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::wl::{marked_init, refine, regular_chain_color};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("cannot select {t} roots from {components} components without repeats")]
    OracleExhausted { t: usize, components: usize },
    #[error(transparent)]
    Gnn(#[from] crate::gnn::GnnError),
    #[error(transparent)]
    Tape(#[from] crate::tape::TapeError),
    #[error(transparent)]
    Bag(#[from] crate::bags::BagError),
}

/// Four GraphConv layers (2->2, 2->2, 2->2, 2->1) with fixed weights, pooled
/// with a minimum over subgraphs.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreePolicyNet {
    pub layers: Vec<Layer>,
    pub threshold: usize,
}

/// The explicit weight assignment for the degree-aware policy.
///
/// Layer 0 turns `(1, root)` rows into `(relu(degree - d), root)`; layers 1
/// and 2 flip the first channel through `relu(1 - x)` twice, leaving an
/// exact 0/1 indicator of `degree > d`; layer 3 subtracts the root indicator
/// so a subgraph vetoes its own root. Min pooling across the bag then keeps
/// a node at 1.0 only if no subgraph vetoed it.
pub fn degree_policy_net(threshold: usize) -> Result<DegreePolicyNet, VerifyError> {
    if threshold == 0 {
        return Err(VerifyError::ZeroThreshold);
    }
    let d = threshold as f64;
    let flip = || {
        Layer::GraphConv(GraphConvLayer {
            w_self: Tensor::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0]]),
            w_neigh: Tensor::zeros(2, 2),
            bias: Tensor::row(&[1.0, 0.0]),
        })
    };
    let layers = vec![
        Layer::GraphConv(GraphConvLayer {
            w_self: Tensor::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]),
            w_neigh: Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
            bias: Tensor::row(&[-d, 0.0]),
        }),
        flip(),
        flip(),
        Layer::GraphConv(GraphConvLayer {
            w_self: Tensor::from_rows(&[vec![1.0], vec![-1.0]]),
            w_neigh: Tensor::zeros(2, 1),
            bias: Tensor::row(&[0.0]),
        }),
    ];
    Ok(DegreePolicyNet { layers, threshold })
}

fn selected_markings(selected: &BTreeSet<usize>) -> Vec<Marking> {
    let mut markings = vec![Marking::Original];
    markings.extend(selected.iter().map(|&v| Marking::Root(v)));
    markings
}

/// Per-node scores of the degree policy run through the generic bag forward
/// with GraphConv encoders and min pooling. Exactly 1.0 for nodes with
/// degree above the threshold that are not yet selected, exactly 0.0
/// otherwise.
pub fn degree_policy_scores(
    graph: &Graph,
    threshold: usize,
    selected: &BTreeSet<usize>,
) -> Result<Vec<f64>, VerifyError> {
    let net = degree_policy_net(threshold)?;
    let mut tape = Tape::new();
    let handle = tape.register_graph(graph);
    let mut binding = ParamBinding::default();
    let bound: Vec<BoundLayer> = net
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| layer.bind(&mut tape, &format!("degree/{l}"), &mut binding))
        .collect();
    let outputs = ds_forward_single(&mut tape, graph, handle, &selected_markings(selected), &bound)?;
    let pooled = tape.min_stack(&outputs)?;
    Ok(tape.value(pooled).data().to_vec())
}

/// Hand-rolled trace of the same four layers, kept independent of the tape
/// engine as a cross-implementation oracle.
pub fn degree_policy_scores_trace(
    graph: &Graph,
    threshold: usize,
    selected: &BTreeSet<usize>,
) -> Vec<f64> {
    let n = graph.num_nodes();
    let d = threshold as f64;
    let mut scores = vec![f64::INFINITY; n];
    let mut bag_roots: Vec<Option<usize>> = vec![None];
    bag_roots.extend(selected.iter().map(|&v| Some(v)));
    for root in bag_roots {
        for v in 0..n {
            let id = if Some(v) == root { 1.0 } else { 0.0 };
            let degree = graph.neighbors(v).len() as f64;
            let l1 = ((degree - d).max(0.0), id);
            let l2 = ((1.0 - l1.0).max(0.0), l1.1);
            let l3 = ((1.0 - l2.0).max(0.0), l2.1);
            let l4 = (l3.0 - l3.1).max(0.0);
            scores[v] = scores[v].min(l4);
        }
    }
    scores
}

/// Iterative refinement-oracle selector.
///
/// At each step every already-chosen root is individualized in its own
/// refinement run; a node is excluded when its stable color differs from
/// the color class that unperturbed regular components keep, i.e. when the
/// refinement reveals it shares a component with a chosen root. The next
/// root is drawn uniformly from the remaining nodes.
pub fn wl_oracle_bag(graph: &Graph, t: usize, seed: u64) -> Result<SubgraphBag<'_>, VerifyError> {
    let components = connected_components(graph).count();
    if t > components {
        return Err(VerifyError::OracleExhausted { t, components });
    }
    let n = graph.num_nodes();
    let degree = graph.max_degree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots: Vec<usize> = Vec::with_capacity(t);
    for _ in 0..t {
        let mut excluded = vec![false; n];
        for &root in &roots {
            let coloring = refine(graph, &marked_init(n, root));
            let untouched = regular_chain_color(degree, coloring.rounds());
            for v in 0..n {
                if coloring.interned()[v] != untouched {
                    excluded[v] = true;
                }
            }
        }
        let eligible: Vec<usize> = (0..n).filter(|&v| !excluded[v]).collect();
        if eligible.is_empty() {
            return Err(VerifyError::OracleExhausted { t, components });
        }
        roots.push(eligible[rng.random_range(0..eligible.len())]);
    }
    Ok(SubgraphBag::new(graph, roots)?)
}

/// Outcome of one verification check, formatted by the `verify` subcommand.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, details: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            details,
        }
    }
}

fn family_members(n: usize, skips: &[usize], l: usize) -> Vec<Graph> {
    subsets(skips, l)
        .into_iter()
        .map(|subset| csl_union(n, &subset).expect("valid family"))
        .collect()
}

fn subsets(pool: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    if pool.len() < size {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in pool.iter().enumerate() {
        for mut rest in subsets(&pool[i + 1..], size - 1) {
            let mut subset = vec![first];
            subset.append(&mut rest);
            out.push(subset);
        }
    }
    out
}

/// Uniform refinement cannot tell family members apart, and every stable
/// coloring is monochromatic.
pub fn check_wl_indistinguishability() -> CheckOutcome {
    let members = family_members(13, &[2, 3, 5], 2);
    let mut pairs = 0;
    let mut separated = 0;
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            pairs += 1;
            if crate::wl::distinguish(&members[i], &members[j]) {
                separated += 1;
            }
        }
    }
    let triple = csl_union(13, &[2, 3, 5]).unwrap();
    let perm: Vec<usize> = (0..39).map(|v| (v * 16 + 5) % 39).collect();
    let relabeled = triple.relabeled(&perm).unwrap();
    pairs += 1;
    if crate::wl::distinguish(&triple, &relabeled) {
        separated += 1;
    }
    let mut monochromatic = true;
    for member in members.iter().chain([&triple]) {
        let coloring = refine(member, &crate::wl::uniform_init(member.num_nodes()));
        monochromatic &= coloring.class_count() == 1;
    }
    CheckOutcome::new(
        "wl-indistinguishability",
        separated == 0 && monochromatic,
        format!("{pairs} pairs compared, {separated} separated, monochromatic = {monochromatic}"),
    )
}

/// A single marked subgraph separates the two basic circulant graphs.
pub fn check_single_mark_disambiguation() -> CheckOutcome {
    let a = crate::graph::csl(13, 5).unwrap();
    let b = crate::graph::csl(13, 3).unwrap();
    let distinct = crate::wl::marked_certificate(&a, 0).unwrap() != crate::wl::marked_certificate(&b, 0).unwrap();
    CheckOutcome::new(
        "single-mark-disambiguation",
        distinct,
        "marked certificates of CSL(13,5) and CSL(13,3) differ".to_string(),
    )
}

/// Exhaustive identification-coverage equivalence over all ordered root
/// pairs of every two-component family member.
pub fn check_identification_equivalence() -> CheckOutcome {
    let members = family_members(13, &[2, 3, 5], 2);
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for member in &members {
        let partition = connected_components(member);
        let n = member.num_nodes();
        for u in 0..n {
            for v in 0..n {
                let bag = SubgraphBag::new(member, vec![u, v]).unwrap();
                let covered = crate::bags::covers_all_components(&bag, &partition);
                let identified = identifies(&bag, &members).unwrap();
                checked += 1;
                if covered != identified {
                    mismatches += 1;
                }
            }
        }
    }
    CheckOutcome::new(
        "identification-coverage-equivalence",
        mismatches == 0,
        format!("{checked} ordered root pairs checked, {mismatches} mismatches"),
    )
}

/// Monte-Carlo success probability against the closed form.
pub fn check_random_policy_probability(seed: u64) -> CheckOutcome {
    let mut details = Vec::new();
    let mut passed = true;
    for l in [2usize, 3, 5] {
        let exact = success_probability_exact(l).unwrap();
        let stats = success_probability_mc(13, l, 100_000, seed ^ l as u64).unwrap();
        let tolerance = 3.0 * (exact * (1.0 - exact) / stats.trials as f64).sqrt();
        let ok = (stats.success_prob - exact).abs() <= tolerance;
        passed &= ok;
        details.push(format!("l={l}: {:.4} vs {:.4}", stats.success_prob, exact));
    }
    CheckOutcome::new("random-policy-success", passed, details.join(", "))
}

/// Monte-Carlo expected draws against the coupon-collector closed form.
pub fn check_expected_draws(seed: u64) -> CheckOutcome {
    let mut details = Vec::new();
    let mut passed = true;
    for l in [2usize, 3, 10] {
        let exact = expected_draws_exact(l).unwrap();
        let stats = expected_draws_mc(13, l, 100_000, seed ^ (l as u64) << 8).unwrap();
        let ok = (stats.expected_draws - exact).abs() <= 3.0 * stats.std_err;
        passed &= ok;
        details.push(format!("l={l}: {:.3} vs {:.3}", stats.expected_draws, exact));
    }
    CheckOutcome::new("expected-draws", passed, details.join(", "))
}

fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::with_unit_features(n, &edges).unwrap()
}

/// Bit-exact semantics of the degree-policy weights on randomized graphs,
/// and agreement between the generic forward and the hand-rolled trace.
pub fn check_degree_policy(seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs_checked = 0;
    let mut failures = 0;
    for case in 0..24 {
        let n = 6 + (case % 7);
        let graph = random_graph(&mut rng, n, 0.4);
        let threshold = 1 + rng.random_range(0..4);
        let mut selected = BTreeSet::new();
        for v in 0..n {
            if rng.random::<f64>() < 0.3 {
                selected.insert(v);
            }
        }
        let scores = degree_policy_scores(&graph, threshold, &selected).unwrap();
        let trace = degree_policy_scores_trace(&graph, threshold, &selected);
        graphs_checked += 1;
        for v in 0..n {
            let expected: f64 = if graph.neighbors(v).len() > threshold && !selected.contains(&v) {
                1.0
            } else {
                0.0
            };
            if scores[v].to_bits() != expected.to_bits() || trace[v].to_bits() != expected.to_bits() {
                failures += 1;
            }
        }
    }
    CheckOutcome::new(
        "degree-policy-weights",
        failures == 0,
        format!("{graphs_checked} randomized graphs, {failures} node mismatches"),
    )
}

/// Identification rates: the refinement oracle must always identify, the
/// uniform random policy only at the closed-form rate.
pub struct SeparationReport {
    pub oracle_rate: f64,
    pub random_rate: f64,
    pub expected_random_rate: f64,
    pub runs: usize,
}

pub fn separation_rates(n: usize, skips: &[usize], l: usize, runs: usize, seed: u64) -> SeparationReport {
    let members = family_members(n, skips, l);
    let mut oracle_hits = 0usize;
    let mut random_hits = 0usize;
    let mut total = 0usize;
    for (m, member) in members.iter().enumerate() {
        for run in 0..runs {
            let run_seed = seed ^ ((m as u64) << 32) ^ run as u64;
            let oracle = wl_oracle_bag(member, l, run_seed).unwrap();
            if identifies(&oracle, &members).unwrap() {
                oracle_hits += 1;
            }
            let random = random_bag(member, l, run_seed, true).unwrap();
            if identifies(&random, &members).unwrap() {
                random_hits += 1;
            }
            total += 1;
        }
    }
    SeparationReport {
        oracle_rate: oracle_hits as f64 / total as f64,
        random_rate: random_hits as f64 / total as f64,
        expected_random_rate: success_probability_exact(l).unwrap(),
        runs: total,
    }
}

pub fn check_oracle_separation(seed: u64) -> CheckOutcome {
    let mut passed = true;
    let mut details = Vec::new();
    for (skips, l, runs) in [(vec![2usize, 3, 5], 2usize, 334), (vec![2, 3, 5], 3, 1000)] {
        let report = separation_rates(13, &skips, l, runs, seed);
        let sigma = (report.expected_random_rate * (1.0 - report.expected_random_rate)
            / report.runs as f64)
            .sqrt();
        let ok = report.oracle_rate == 1.0
            && (report.random_rate - report.expected_random_rate).abs() <= 3.0 * sigma;
        passed &= ok;
        details.push(format!(
            "l={l}: oracle {:.3}, random {:.3} (expected {:.3})",
            report.oracle_rate, report.random_rate, report.expected_random_rate
        ));
    }
    CheckOutcome::new("oracle-vs-random-separation", passed, details.join("; "))
}

/// Message counts of the iterative selection phase must fit
/// `c * T(T+1)/2 * n * max_degree` exactly.
pub fn check_complexity_scaling(seed: u64) -> CheckOutcome {
    let graph = crate::graph::csl(13, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = crate::gnn::SelectionNet::new(&mut rng, 1, 4, 2, 1.0, 0.0);
    let unit = (graph.num_nodes() * graph.max_degree()) as u64;
    let mut passed = true;
    let mut details = Vec::new();
    let mut scale: Option<u64> = None;
    for t in [1usize, 2, 4, 8] {
        let messages = selection_message_count(&graph, &net, t, seed);
        let weight = (t * (t + 1) / 2) as u64;
        let c = scale.get_or_insert(messages / (weight * unit));
        let expected = *c * weight * unit;
        let ok = messages == expected;
        passed &= ok;
        details.push(format!("T={t}: {messages} messages"));
    }
    CheckOutcome::new(
        "selection-complexity-scaling",
        passed,
        format!("{} (c = {})", details.join(", "), scale.unwrap_or(0)),
    )
}

/// Total neighbor-aggregation messages of a T-step evaluation-mode
/// selection phase.
pub fn selection_message_count(
    graph: &Graph,
    net: &crate::gnn::SelectionNet,
    t: usize,
    seed: u64,
) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut markings = vec![Marking::Original];
    let mut messages = 0u64;
    for _ in 0..t {
        let mut tape = Tape::new();
        let handle = tape.register_graph(graph);
        let mut binding = ParamBinding::default();
        let bound = net.bind(&mut tape, "f", &mut binding);
        let outcome = crate::gnn::select_step(
            &mut tape,
            graph,
            handle,
            &markings,
            &bound,
            crate::gnn::SelectMode::Eval,
            &mut rng,
            None,
        )
        .unwrap();
        messages += tape.messages();
        markings.push(Marking::Root(outcome.node));
    }
    messages
}

/// Every theory check in one table.
pub fn run_all_checks(seed: u64) -> Vec<CheckOutcome> {
    vec![
        check_wl_indistinguishability(),
        check_single_mark_disambiguation(),
        check_identification_equivalence(),
        check_random_policy_probability(seed),
        check_expected_draws(seed),
        check_degree_policy(seed),
        check_oracle_separation(seed),
        check_complexity_scaling(seed),
    ]
}
