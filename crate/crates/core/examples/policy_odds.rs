//! Closed-form random-policy statistics against Monte-Carlo simulation:
//! the probability that l uniform draws cover l components, and the
//! expected draws until full coverage.
//!
//! Run with: cargo run --release --example policy_odds

use subgraph_lab::policy::{
    expected_draws_exact, expected_draws_mc, success_probability_exact, success_probability_mc,
};

fn main() {
    let trials = 100_000;
    println!("l | exact success | simulated | exact draws | simulated");
    println!("--+---------------+-----------+-------------+----------");
    for l in [1usize, 2, 3, 5, 10] {
        let exact_p = success_probability_exact(l).unwrap();
        let mc_p = success_probability_mc(13, l, trials, 7 + l as u64).unwrap();
        let exact_d = expected_draws_exact(l).unwrap();
        let mc_d = expected_draws_mc(13, l, trials, 11 + l as u64).unwrap();
        println!(
            "{l:2} | {exact_p:13.5} | {:9.5} | {exact_d:11.4} | {:9.4}",
            mc_p.success_prob, mc_d.expected_draws
        );
    }
    println!();
    let l = 100;
    println!(
        "at l = {l}: exact expected draws {:.2}, against the l*ln(l) growth estimate {:.2}",
        expected_draws_exact(l).unwrap(),
        (l as f64) * (l as f64).ln()
    );
}
