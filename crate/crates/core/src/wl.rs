//! 1-WL color refinement with canonical, cross-graph-comparable fingerprints.
//!
//! A color is canonically encoded as the string `"(old|c1,c2,...)"` built
//! from the previous color and the ascending multiset of neighbor colors.
//! Color strings are interned to dense ids through a process-global table,
//! so colorings computed on different graphs at different times can be
//! compared directly: equal ids mean equal refinement histories.

use crate::graph::{Graph, GraphError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, OnceLock};

/// Id of an interned canonical color string.
pub type ColorId = usize;

struct Interner {
    ids: HashMap<String, ColorId>,
    strings: Vec<String>,
}

fn interner() -> &'static Mutex<Interner> {
    static TABLE: OnceLock<Mutex<Interner>> = OnceLock::new();
    TABLE.get_or_init(|| {
        Mutex::new(Interner {
            ids: HashMap::new(),
            strings: Vec::new(),
        })
    })
}

fn intern_batch(keys: Vec<String>) -> Vec<ColorId> {
    let mut table = interner().lock().expect("interner poisoned");
    keys.into_iter()
        .map(|key| match table.ids.get(&key) {
            Some(&id) => id,
            None => {
                let id = table.strings.len();
                table.strings.push(key.clone());
                table.ids.insert(key, id);
                id
            }
        })
        .collect()
}

fn color_strings(ids: &[ColorId]) -> Vec<String> {
    let table = interner().lock().expect("interner poisoned");
    ids.iter().map(|&id| table.strings[id].clone()).collect()
}

/// Stable coloring returned by [`refine`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    colors: Vec<usize>,
    interned: Vec<ColorId>,
    rounds: usize,
}

impl Coloring {
    /// Per-node color classes, densely renumbered from 0 in order of first
    /// occurrence. Only comparable within this coloring.
    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    /// Per-node globally interned color ids, comparable across graphs.
    pub fn interned(&self) -> &[ColorId] {
        &self.interned
    }

    /// Number of refinement rounds executed, including the final round that
    /// confirmed stability.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn class_count(&self) -> usize {
        self.colors.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Canonical color histogram of a stable coloring: `(color string, count)`
/// pairs sorted lexicographically. Permutation-invariant, and byte-wise
/// comparable across graphs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WlFingerprint {
    entries: Vec<(String, usize)>,
}

impl WlFingerprint {
    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }
}

fn densify(ids: &[ColorId]) -> Vec<usize> {
    let mut remap: HashMap<ColorId, usize> = HashMap::new();
    ids.iter()
        .map(|&id| {
            let next = remap.len();
            *remap.entry(id).or_insert(next)
        })
        .collect()
}

fn initial_ids(init: &[usize]) -> Vec<ColorId> {
    intern_batch(init.iter().map(|c| format!("i{c}")).collect())
}

fn refine_round(graph: &Graph, colors: &[ColorId]) -> Vec<ColorId> {
    let keys: Vec<String> = (0..graph.num_nodes())
        .map(|v| {
            let mut neighbor_colors: Vec<ColorId> =
                graph.neighbors(v).iter().map(|&u| colors[u]).collect();
            neighbor_colors.sort_unstable();
            let parts: Vec<String> = neighbor_colors.iter().map(ColorId::to_string).collect();
            format!("({}|{})", colors[v], parts.join(","))
        })
        .collect();
    intern_batch(keys)
}

fn class_count(ids: &[ColorId]) -> usize {
    let mut seen: Vec<ColorId> = ids.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn refine_ids(graph: &Graph, init: &[usize]) -> (Vec<ColorId>, usize) {
    assert_eq!(init.len(), graph.num_nodes(), "init length must match node count");
    let mut colors = initial_ids(init);
    let mut rounds = 0;
    // Each round refines the previous partition (the new color includes the
    // old one), so stability is detected by an unchanged class count. A
    // partition on n nodes strictly refines at most n - 1 times.
    for _ in 0..graph.num_nodes() {
        let next = refine_round(graph, &colors);
        rounds += 1;
        let stable = class_count(&next) == class_count(&colors);
        colors = next;
        if stable {
            break;
        }
    }
    (colors, rounds)
}

/// Run color refinement from the given initial coloring until the partition
/// stabilizes (at most `n` rounds).
pub fn refine(graph: &Graph, init: &[usize]) -> Coloring {
    let (interned, rounds) = refine_ids(graph, init);
    Coloring {
        colors: densify(&interned),
        interned,
        rounds,
    }
}

/// Densified colorings after each executed round, ending with the stable one.
pub fn refinement_trace(graph: &Graph, init: &[usize]) -> Vec<Vec<usize>> {
    let mut colors = initial_ids(init);
    let mut trace = Vec::new();
    for _ in 0..graph.num_nodes() {
        let next = refine_round(graph, &colors);
        let stable = class_count(&next) == class_count(&colors);
        colors = next;
        trace.push(densify(&colors));
        if stable {
            break;
        }
    }
    trace
}

fn histogram(ids: &[ColorId]) -> WlFingerprint {
    let strings = color_strings(ids);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in strings {
        *counts.entry(s).or_insert(0) += 1;
    }
    WlFingerprint {
        entries: counts.into_iter().collect(),
    }
}

/// Stable-coloring fingerprint for an arbitrary initial coloring.
pub fn fingerprint(graph: &Graph, init: &[usize]) -> WlFingerprint {
    let (ids, _) = refine_ids(graph, init);
    histogram(&ids)
}

/// All-equal initial coloring.
pub fn uniform_init(n: usize) -> Vec<usize> {
    vec![0; n]
}

/// Two-color initial coloring that individualizes one node.
pub fn marked_init(n: usize, marked: usize) -> Vec<usize> {
    let mut init = vec![0; n];
    init[marked] = 1;
    init
}

/// True iff refinement from constant colors separates the two graphs.
pub fn distinguish(a: &Graph, b: &Graph) -> bool {
    fingerprint(a, &uniform_init(a.num_nodes())) != fingerprint(b, &uniform_init(b.num_nodes()))
}

/// Fingerprint of the graph with node `marked` individualized; the
/// certificate used to identify isomorphism types of circulant components.
pub fn marked_certificate(graph: &Graph, marked: usize) -> Result<WlFingerprint, GraphError> {
    if marked >= graph.num_nodes() {
        return Err(GraphError::NodeOutOfRange {
            v: marked,
            n: graph.num_nodes(),
        });
    }
    Ok(fingerprint(graph, &marked_init(graph.num_nodes(), marked)))
}

/// Color an unperturbed `degree`-regular component reaches after `rounds`
/// refinement rounds under constant initialization. Nodes of such a
/// component see the same constant color at every round, so the chain is
/// independent of the component it sits in.
pub fn regular_chain_color(degree: usize, rounds: usize) -> ColorId {
    let mut color = intern_batch(vec!["i0".to_string()])[0];
    for _ in 0..rounds {
        let parts = vec![color.to_string(); degree];
        let key = format!("({}|{})", color, parts.join(","));
        color = intern_batch(vec![key])[0];
    }
    color
}
