//! Node-marking subgraph bags and the non-learned selection policies:
//! full bag, uniform random selection, and the per-component oracle.
//!
//! A "subgraph" under node marking is the original graph with one root
//! node's indicator appended to its features; connectivity is untouched.
//! Bags always contain the original (unmarked) graph in addition to the
//! selected subgraphs. Marked features are materialized lazily from the
//! root id, never copied per subgraph.

use crate::graph::{connected_components, ComponentPartition, Graph};
use crate::wl::{marked_certificate, WlFingerprint};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BagError {
    #[error("root {v} out of range for {n} nodes")]
    RootOutOfRange { v: usize, n: usize },
    #[error("cannot draw {t} distinct roots from {n} nodes without replacement")]
    SampleTooLarge { t: usize, n: usize },
    #[error("at least one subgraph must be selected")]
    EmptySelection,
    #[error("the bag's base graph is not a member of the given family")]
    BaseNotInFamily,
}

/// One node-marked subgraph: the base graph plus a root indicator channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedSubgraph<'g> {
    pub base: &'g Graph,
    pub root: usize,
}

impl MarkedSubgraph<'_> {
    /// Effective feature row of node `v`: the base features with the root
    /// indicator appended as an extra channel.
    pub fn feature_row(&self, v: usize) -> Vec<f64> {
        let mut row = self.base.features()[v].clone();
        row.push(if v == self.root { 1.0 } else { 0.0 });
        row
    }
}

/// Ordered multiset of selected roots over one base graph. The original
/// graph is always part of the bag, so `size() == roots().len() + 1`.
/// Duplicate roots are permitted; bag-level predicates ignore order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphBag<'g> {
    base: &'g Graph,
    roots: Vec<usize>,
}

impl<'g> SubgraphBag<'g> {
    pub fn new(base: &'g Graph, roots: Vec<usize>) -> Result<Self, BagError> {
        let n = base.num_nodes();
        if let Some(&v) = roots.iter().find(|&&v| v >= n) {
            return Err(BagError::RootOutOfRange { v, n });
        }
        Ok(Self { base, roots })
    }

    pub fn base(&self) -> &'g Graph {
        self.base
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// Bag size counting the original graph.
    pub fn size(&self) -> usize {
        self.roots.len() + 1
    }

    pub fn subgraphs(&self) -> impl Iterator<Item = MarkedSubgraph<'g>> + '_ {
        let base = self.base;
        self.roots.iter().map(move |&root| MarkedSubgraph { base, root })
    }

    /// Wire format: `{"graph": <graph object>, "roots": [v1, ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let labeled = crate::graph::LabeledGraph {
            graph: self.base.clone(),
            label: None,
        };
        serde_json::json!({
            "graph": labeled,
            "roots": self.roots,
        })
    }
}

/// Bag containing every node-marked subgraph, roots in id order.
pub fn full_bag(base: &Graph) -> SubgraphBag<'_> {
    SubgraphBag {
        roots: (0..base.num_nodes()).collect(),
        base,
    }
}

/// Bag of `t` roots drawn uniformly at random; deterministic under `seed`.
pub fn random_bag(
    base: &Graph,
    t: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<SubgraphBag<'_>, BagError> {
    if t == 0 {
        return Err(BagError::EmptySelection);
    }
    let n = base.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roots = if with_replacement {
        (0..t).map(|_| rng.random_range(0..n)).collect()
    } else {
        if t > n {
            return Err(BagError::SampleTooLarge { t, n });
        }
        // Partial Fisher-Yates: the first t entries are a uniform sample.
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..t {
            let j = rng.random_range(i..n);
            pool.swap(i, j);
        }
        pool.truncate(t);
        pool
    };
    Ok(SubgraphBag { base, roots })
}

/// Bag with exactly one root per connected component: the lowest node id in
/// each. Any representative works for vertex-transitive components; the
/// lowest id is the reproducible tie-break.
pub fn oracle_bag<'g>(base: &'g Graph, partition: &ComponentPartition) -> SubgraphBag<'g> {
    let mut roots = vec![usize::MAX; partition.count()];
    for v in (0..base.num_nodes()).rev() {
        roots[partition.label_of(v)] = v;
    }
    SubgraphBag { base, roots }
}

/// True iff every connected component contains at least one root.
pub fn covers_all_components(bag: &SubgraphBag, partition: &ComponentPartition) -> bool {
    let mut covered = vec![false; partition.count()];
    for &root in bag.roots() {
        covered[partition.label_of(root)] = true;
    }
    covered.into_iter().all(|c| c)
}

/// Deduplicated set of marked refinement certificates over the bag's roots.
/// Roots in the same vertex-transitive component collapse to one entry.
pub fn certificate_set(bag: &SubgraphBag) -> BTreeSet<WlFingerprint> {
    bag.roots()
        .iter()
        .map(|&root| marked_certificate(bag.base(), root).expect("roots validated"))
        .collect()
}

/// Certificates of a full-coverage bag of the graph: one marked certificate
/// per connected component.
pub fn reference_certificates(graph: &Graph) -> BTreeSet<WlFingerprint> {
    let partition = connected_components(graph);
    certificate_set(&oracle_bag(graph, &partition))
}

/// Whether the bag pins down which family member its base graph is.
///
/// Holds iff the bag's certificate set has one entry per connected component
/// and matches the reference component-certificate set of exactly one family
/// member. The base graph must itself be a member of `family`.
pub fn identifies(bag: &SubgraphBag, family: &[Graph]) -> Result<bool, BagError> {
    if !family.iter().any(|g| g == bag.base()) {
        return Err(BagError::BaseNotInFamily);
    }
    let partition = connected_components(bag.base());
    let certificates = certificate_set(bag);
    if certificates.len() != partition.count() {
        return Ok(false);
    }
    let matches = family
        .iter()
        .filter(|member| reference_certificates(member) == certificates)
        .count();
    Ok(matches == 1)
}
