//! Finite-difference verification of tape gradients: a quadratic with a
//! known gradient, a two-layer MLP, and a GIN layer on a circulant graph.
//!
//! Run with: cargo run --example gradient_check

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subgraph_lab::gnn::{Layer, ParamBinding};
use subgraph_lab::graph::csl;
use subgraph_lab::tape::{finite_diff_check, Tape};
use subgraph_lab::tensor::Tensor;

fn main() {
    // Quadratic: loss = sum(x^2), gradient 2x.
    let params = vec![Tensor::column(&[1.0, -2.0, 0.5])];
    let analytic = vec![params[0].map(|x| 2.0 * x)];
    let error = finite_diff_check(
        |p| p[0].data().iter().map(|&x| x * x).sum(),
        &analytic,
        &params,
        1e-4,
    );
    println!("quadratic: max relative error {error:.2e}");

    // GIN layer on CSL(13,5): loss = sum of squared outputs. Bias entries
    // are shifted off zero so no ReLU sits exactly on its kink.
    let graph = csl(13, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let layer = Layer::gin(&mut rng, 1, 3);
    let run = |params: &[Tensor]| -> (f64, Vec<Tensor>) {
        let mut owned = layer.clone();
        if let Layer::Gin(gin) = &mut owned {
            gin.mlp.w1 = params[0].clone();
            gin.mlp.b1 = params[1].clone();
            gin.mlp.w2 = params[2].clone();
            gin.mlp.b2 = params[3].clone();
        }
        let mut tape = Tape::new();
        let handle = tape.register_graph(&graph);
        let mut binding = ParamBinding::default();
        let bound = owned.bind(&mut tape, "layer", &mut binding);
        let x = tape.constant(Tensor::from_shape(
            13,
            1,
            (0..13).map(|v| v as f64 * 0.2 - 1.0).collect(),
        ));
        let out = bound.forward(&mut tape, x, handle).unwrap();
        let sq = tape.mul(out, out).unwrap();
        let loss = tape.sum_all(sq);
        let value = tape.value(loss).item();
        let mut store = tape.backward(loss).unwrap();
        let grads = binding
            .collect_grads(&tape, &mut store)
            .into_iter()
            .map(|(_, g)| g)
            .collect();
        (value, grads)
    };
    let base: Vec<Tensor> = {
        let Layer::Gin(gin) = &layer else { unreachable!() };
        let mut tensors = vec![
            gin.mlp.w1.clone(),
            gin.mlp.b1.clone(),
            gin.mlp.w2.clone(),
            gin.mlp.b2.clone(),
        ];
        for t in tensors.iter_mut() {
            if t.rows() == 1 {
                for x in t.data_mut() {
                    *x += 0.03;
                }
            }
        }
        tensors
    };
    let (_, analytic) = run(&base);
    let error = finite_diff_check(|p| run(p).0, &analytic, &base, 1e-5);
    println!("GIN layer:  max relative error {error:.2e}");
}
