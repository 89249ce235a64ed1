//! Desk-scale laboratory for learnable subgraph selection in subgraph GNNs.
//!
//! The crate builds the circulant skip-link graph families that defeat plain
//! 1-WL message passing, the node-marking bag machinery and selection
//! policies defined on them, a minimal reverse-mode tensor engine, the
//! two-network (selection + prediction) architecture trained end to end with
//! straight-through Gumbel-Softmax sampling, executable versions of the
//! constructive policy results, and an experiment harness with a small CLI.
//!
//! See the `examples/` directory for one runnable walkthrough per capability.

pub mod bags;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod policy;
pub mod tape;
pub mod tensor;
pub mod verify;
pub mod wl;

pub use graph::{connected_components, csl, csl_union, ComponentPartition, Graph, LabeledGraph};
pub use wl::{marked_certificate, WlFingerprint};
