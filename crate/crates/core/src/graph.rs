//! Undirected simple graphs with node features, plus generators for the
//! circulant skip-link (CSL) families used throughout the crate.
//!
//! A CSL graph is an n-cycle with an extra "skip" edge every `skip` steps;
//! it is 4-regular and vertex-transitive. Disjoint unions of pairwise
//! non-isomorphic CSL graphs form the hard instances the selection policies
//! are evaluated on.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({u}, {v}) is invalid for a {n}-node simple graph")]
    InvalidEdge { u: usize, v: usize, n: usize },
    #[error("feature matrix has {rows} rows but the graph has {n} nodes")]
    FeatureRowMismatch { rows: usize, n: usize },
    #[error("node {v} out of range for {n} nodes")]
    NodeOutOfRange { v: usize, n: usize },
    #[error("cycle length {n} and skip length {skip} must be coprime")]
    NotCoprime { n: usize, skip: usize },
    #[error("skip length {skip} must lie in [2, n-2] for n = {n}")]
    SkipOutOfRange { n: usize, skip: usize },
    #[error("skip lengths {a} and {b} yield isomorphic circulant components")]
    IsomorphicComponents { a: usize, b: usize },
}

/// Undirected simple graph with per-node feature rows.
///
/// Edges are stored twice: as a sorted pair set (canonical `u < v`, used for
/// equality and serialization) and as adjacency lists (used for message
/// passing). Both views are built by the constructor and never mutated, so
/// a `Graph` is safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    features: Vec<Vec<f64>>,
}

impl Graph {
    /// Build a graph from an edge list, validating the simple-graph and
    /// feature-shape invariants. Duplicate edges (in either orientation)
    /// and self-loops are rejected.
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Vec<Vec<f64>>,
    ) -> Result<Self, GraphError> {
        if num_nodes == 0 {
            return Err(GraphError::Empty);
        }
        if features.len() != num_nodes {
            return Err(GraphError::FeatureRowMismatch {
                rows: features.len(),
                n: num_nodes,
            });
        }
        let mut canonical = BTreeSet::new();
        for &(u, v) in edges {
            if u == v || u >= num_nodes || v >= num_nodes {
                return Err(GraphError::InvalidEdge { u, v, n: num_nodes });
            }
            let pair = (u.min(v), u.max(v));
            if !canonical.insert(pair) {
                return Err(GraphError::InvalidEdge { u, v, n: num_nodes });
            }
        }
        let edges: Vec<(usize, usize)> = canonical.into_iter().collect();
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges,
            adjacency,
            features,
        })
    }

    /// Graph with a single constant feature channel of 1.0 per node.
    pub fn with_unit_features(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        Self::new(num_nodes, edges, vec![vec![1.0]; num_nodes])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge pairs with `u < v`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature_channels(&self) -> usize {
        self.features[0].len()
    }

    pub fn degree(&self, v: usize) -> Result<usize, GraphError> {
        if v >= self.num_nodes {
            return Err(GraphError::NodeOutOfRange {
                v,
                n: self.num_nodes,
            });
        }
        Ok(self.adjacency[v].len())
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Copy of the graph with node ids renamed by `perm` (`perm[old] = new`).
    /// `perm` must be a permutation of `0..num_nodes`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self, GraphError> {
        if perm.len() != self.num_nodes {
            return Err(GraphError::NodeOutOfRange {
                v: perm.len(),
                n: self.num_nodes,
            });
        }
        let mut seen = vec![false; self.num_nodes];
        for &p in perm {
            if p >= self.num_nodes || seen[p] {
                return Err(GraphError::NodeOutOfRange {
                    v: p,
                    n: self.num_nodes,
                });
            }
            seen[p] = true;
        }
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut features = vec![Vec::new(); self.num_nodes];
        for (old, row) in self.features.iter().enumerate() {
            features[perm[old]] = row.clone();
        }
        Self::new(self.num_nodes, &edges, features)
    }
}

/// Partition of the nodes into connected components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentPartition {
    labels: Vec<usize>,
    count: usize,
}

impl ComponentPartition {
    /// Component id per node; ids are dense and assigned in order of the
    /// lowest node id contained in each component.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn label_of(&self, v: usize) -> usize {
        self.labels[v]
    }
}

/// Connectivity partition by breadth-first traversal.
pub fn connected_components(graph: &Graph) -> ComponentPartition {
    let n = graph.num_nodes();
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &u in graph.neighbors(v) {
                if labels[u] == usize::MAX {
                    labels[u] = count;
                    queue.push_back(u);
                }
            }
        }
        count += 1;
    }
    ComponentPartition { labels, count }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Circulant skip-link graph: an `n`-cycle plus the skip edges generated by
/// repeatedly stepping `skip` positions from node 0.
///
/// Requires `gcd(n, skip) = 1` and `2 <= skip <= n - 2`; skip length 1 would
/// collapse onto the cycle edges and lose 4-regularity. Nodes carry a single
/// constant feature channel.
pub fn csl(n: usize, skip: usize) -> Result<Graph, GraphError> {
    if skip < 2 || skip + 2 > n {
        return Err(GraphError::SkipOutOfRange { n, skip });
    }
    if gcd(n, skip) != 1 {
        return Err(GraphError::NotCoprime { n, skip });
    }
    let mut edges = Vec::with_capacity(2 * n);
    for j in 0..n {
        edges.push((j, (j + 1) % n));
    }
    let mut s = 0;
    for _ in 0..n {
        let next = (s + skip) % n;
        edges.push((s, next));
        s = next;
    }
    Graph::with_unit_features(n, &edges)
}

/// Disjoint union of pairwise non-isomorphic CSL graphs, one per skip length.
/// Component `i` occupies the node id block `[i*n, (i+1)*n)`.
///
/// Non-isomorphism of the components is certified by comparing single-node
/// marked refinement certificates, which disambiguate every pair of CSL
/// graphs on the same node count.
pub fn csl_union(n: usize, skips: &[usize]) -> Result<Graph, GraphError> {
    let components: Vec<Graph> = skips
        .iter()
        .map(|&skip| csl(n, skip))
        .collect::<Result<_, _>>()?;
    let certificates: Vec<crate::wl::WlFingerprint> = components
        .iter()
        .map(|g| crate::wl::marked_certificate(g, 0).expect("node 0 exists"))
        .collect();
    for i in 0..components.len() {
        for j in (i + 1)..components.len() {
            if certificates[i] == certificates[j] {
                return Err(GraphError::IsomorphicComponents {
                    a: skips[i],
                    b: skips[j],
                });
            }
        }
    }
    let mut edges = Vec::with_capacity(2 * n * skips.len());
    for (i, component) in components.iter().enumerate() {
        let offset = i * n;
        for &(u, v) in component.edges() {
            edges.push((u + offset, v + offset));
        }
    }
    Graph::with_unit_features(n * skips.len(), &edges)
}

/// Wire format for one graph: node count, canonical edge list, feature
/// matrix, and an optional label used by dataset files.
#[derive(Serialize, Deserialize)]
struct GraphRecord {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<f64>,
}

/// A graph together with an optional task label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct LabeledGraph {
    pub graph: Graph,
    pub label: Option<f64>,
}

impl TryFrom<GraphRecord> for LabeledGraph {
    type Error = GraphError;

    fn try_from(record: GraphRecord) -> Result<Self, GraphError> {
        Ok(Self {
            graph: Graph::new(record.num_nodes, &record.edges, record.features)?,
            label: record.label,
        })
    }
}

impl From<LabeledGraph> for GraphRecord {
    fn from(labeled: LabeledGraph) -> Self {
        Self {
            num_nodes: labeled.graph.num_nodes,
            edges: labeled.graph.edges.clone(),
            features: labeled.graph.features.clone(),
            label: labeled.label,
        }
    }
}
