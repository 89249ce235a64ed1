//! The explicit four-layer GraphConv construction that scores a node 1.0
//! exactly when its degree exceeds a threshold and it has not been
//! selected yet, run both through the generic bag forward and a
//! hand-rolled trace.
//!
//! Run with: cargo run --example degree_policy

use std::collections::BTreeSet;
use subgraph_lab::graph::{csl, Graph};
use subgraph_lab::verify::{degree_policy_scores, degree_policy_scores_trace};

fn show(name: &str, graph: &Graph, threshold: usize, selected: &BTreeSet<usize>) {
    let generic = degree_policy_scores(graph, threshold, selected).unwrap();
    let trace = degree_policy_scores_trace(graph, threshold, selected);
    assert_eq!(generic, trace, "generic forward and trace must agree");
    println!("{name}, degree > {threshold}, selected {selected:?}:");
    println!("  scores: {generic:?}");
}

fn main() {
    let circulant = csl(13, 5).unwrap();
    show("CSL(13,5)", &circulant, 3, &BTreeSet::new());
    show("CSL(13,5)", &circulant, 4, &BTreeSet::new());
    show("CSL(13,5)", &circulant, 3, &[0, 7].into_iter().collect());

    let star = Graph::with_unit_features(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
    show("star with five leaves", &star, 2, &BTreeSet::new());
    show("star with five leaves", &star, 2, &[0].into_iter().collect());
}
