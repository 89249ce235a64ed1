//! End-to-end training of the learned selection policy on the
//! family-classification task, compared against the uniform random
//! baseline with the same budget.
//!
//! Run with: cargo run --release --example train_selection [seed]

use subgraph_lab::harness::{run_experiment, Baseline, ExperimentConfig};

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);

    let mut learn_cfg = ExperimentConfig::family_default(Baseline::PolicyLearn, seed);
    learn_cfg.epochs = 500;
    learn_cfg.target_metric = Some(0.9);
    learn_cfg.target_coverage = Some(0.9);

    println!("training learned policy (seed {seed}, T = {}) ...", learn_cfg.t);
    let learned = run_experiment(&learn_cfg).expect("training run");
    let report = &learned.report;
    println!(
        "  stopped after {} epochs: accuracy {:.3}, coverage {:.3} (best epoch {})",
        report.epochs_ran, report.final_metric, report.coverage_rate, report.best_epoch
    );
    println!("  selection histogram: {:?}", report.selection_histogram);

    let mut random_cfg = learn_cfg.clone();
    random_cfg.baseline = Baseline::Random;
    random_cfg.target_metric = None;
    random_cfg.target_coverage = None;
    random_cfg.epochs = report.epochs_ran.max(50);

    println!("training random baseline ...");
    let random = run_experiment(&random_cfg).expect("baseline run");
    println!(
        "  accuracy {:.3}, best-epoch coverage {:.3}, mean coverage {:.3}",
        random.report.final_metric, random.report.coverage_rate, random.report.mean_coverage
    );

    println!();
    println!(
        "separation: learned coverage {:.3} vs random mean coverage {:.3}",
        report.coverage_rate, random.report.mean_coverage
    );
}
