//! Sampling law of the straight-through Gumbel-Softmax: hard selections
//! follow softmax(logits) no matter the temperature, and masked nodes are
//! never drawn.
//!
//! Run with: cargo run --release --example gumbel_sampling

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subgraph_lab::gnn::gumbel_softmax_st;
use subgraph_lab::tape::Tape;
use subgraph_lab::tensor::Tensor;

fn main() {
    let logit_values = [0.0f64, (2.0f64).ln(), (3.0f64).ln()];
    let expected = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
    let draws = 60_000;
    for tau in [0.33, 1.0, 2.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0u64; 3];
        for _ in 0..draws {
            let mut tape = Tape::new();
            let logits = tape.constant(Tensor::column(&logit_values));
            let (_, winner) = gumbel_softmax_st(&mut tape, logits, tau, &mut rng, None).unwrap();
            counts[winner] += 1;
        }
        let observed: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        println!("tau {tau:4}: observed {observed:?} vs softmax(logits) {expected:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tape = Tape::new();
    let logits = tape.constant(Tensor::column(&logit_values));
    let excluded = [true, true, false];
    let (_, winner) = gumbel_softmax_st(&mut tape, logits, 1.0, &mut rng, Some(&excluded)).unwrap();
    println!("with nodes 0 and 1 masked the winner is always node {winner}");
}
