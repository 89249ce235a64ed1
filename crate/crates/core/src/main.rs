//! Command-line front end: dataset generation, theory verification,
//! random-policy simulation, training, and checkpoint evaluation.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use subgraph_lab::gnn::{PredictionNet, SelectionNet};
use subgraph_lab::harness::{
    self, checkpoint_json, csv_row, evaluate_checkpoint, run_experiment_on, ExperimentConfig,
    HarnessError, Task, CSV_HEADER,
};
use subgraph_lab::policy;
use subgraph_lab::verify;

#[derive(Parser)]
#[command(name = "subgraph-lab", version, about = "Subgraph-selection policy laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled family dataset and write it to <out>/dataset.json.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the theory-verification suites and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the table as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form and Monte-Carlo statistics of the uniform random policy.
    PolicySim {
        /// Number of equal-sized components.
        #[arg(long, default_value_t = 2)]
        l: usize,
        /// Nodes per component.
        #[arg(long, default_value_t = 13)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the learned policy or a baseline according to a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(value)?))?;
    Ok(())
}

fn run_generate(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), HarnessError> {
    let cfg = read_config(config, seed)?;
    let dataset = harness::train::load_dataset(&cfg)?;
    let path = out.join("dataset.json");
    write_json(&path, &serde_json::to_value(&dataset)?)?;
    println!(
        "wrote {} graphs in {} classes to {}",
        dataset.len(),
        dataset.classes,
        path.display()
    );
    Ok(())
}

fn run_verify(seed: u64, out: Option<&Path>) -> Result<bool, HarnessError> {
    let outcomes = verify::run_all_checks(seed);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut all_passed = true;
    for outcome in &outcomes {
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        all_passed &= outcome.passed;
        println!("{status}  {:width$}  {}", outcome.name, outcome.details);
    }
    if let Some(dir) = out {
        let table: Vec<serde_json::Value> = outcomes
            .iter()
            .map(|o| {
                serde_json::json!({
                    "name": o.name,
                    "passed": o.passed,
                    "details": o.details,
                })
            })
            .collect();
        write_json(&dir.join("verify.json"), &serde_json::Value::Array(table))?;
    }
    Ok(all_passed)
}

fn run_policy_sim(
    l: usize,
    n: usize,
    trials: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), HarnessError> {
    let invalid = |message: String| HarnessError::InvalidConfig(message);
    let exact_prob = policy::success_probability_exact(l).map_err(|e| invalid(e.to_string()))?;
    let mc_prob =
        policy::success_probability_mc(n, l, trials, seed).map_err(|e| invalid(e.to_string()))?;
    let exact_draws = policy::expected_draws_exact(l).map_err(|e| invalid(e.to_string()))?;
    let mc_draws =
        policy::expected_draws_mc(n, l, trials, seed).map_err(|e| invalid(e.to_string()))?;
    let report = serde_json::json!({
        "l": l,
        "n": n,
        "exact_prob": exact_prob,
        "mc_prob": mc_prob.success_prob,
        "exact_draws": exact_draws,
        "mc_draws": mc_draws.expected_draws,
        "trials": trials,
        "seed": seed,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = out {
        write_json(&dir.join("policy_sim.json"), &report)?;
    }
    Ok(())
}

fn append_csv(path: &Path, row: &str) -> Result<(), HarnessError> {
    use std::io::Write;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(file, "{CSV_HEADER}")?;
    }
    writeln!(file, "{row}")?;
    Ok(())
}

fn run_train(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), HarnessError> {
    let cfg = read_config(config, seed)?;
    let dataset = harness::train::load_dataset(&cfg)?;
    let outcome = run_experiment_on(&cfg, &dataset)?;
    let run_dir = out.join(outcome.report.run_id.clone());
    write_json(
        &run_dir.join("report.json"),
        &serde_json::to_value(&outcome.report)?,
    )?;
    write_json(
        &run_dir.join("checkpoint.json"),
        &checkpoint_json(outcome.selection.as_ref(), &outcome.prediction),
    )?;
    append_csv(&out.join("metrics.csv"), &csv_row(&outcome.report))?;
    let metric_name = match cfg.task {
        Task::Classification => "accuracy",
        Task::Regression => "mae",
    };
    println!(
        "{}: {} epochs, {} {:.4}, coverage {:.4} ({:.1}s); artifacts in {}",
        outcome.report.run_id,
        outcome.report.epochs_ran,
        metric_name,
        outcome.report.final_metric,
        outcome.report.coverage_rate,
        outcome.report.wall_time_secs,
        run_dir.display()
    );
    Ok(())
}

fn run_eval(
    config: &Path,
    checkpoint: &Path,
    data: &Path,
    out: Option<&Path>,
) -> Result<(), HarnessError> {
    let cfg = read_config(config, None)?;
    let text = std::fs::read_to_string(data)?;
    let dataset: harness::Dataset = serde_json::from_str(&text)?;
    let ckpt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(checkpoint)?)?;

    let in_channels = dataset.graphs[0].graph.feature_channels();
    let out_dim = match cfg.task {
        Task::Classification => dataset.classes.max(2),
        Task::Regression => 1,
    };
    let mut rng = rand_seed(cfg.seed);
    let has_selection = ckpt
        .as_object()
        .is_some_and(|map| map.keys().any(|k| k.starts_with("f/")));
    let mut selection = has_selection.then(|| {
        SelectionNet::new(
            &mut rng,
            in_channels,
            cfg.network.width,
            cfg.network.selection_layers,
            cfg.tau,
            cfg.logit_dropout,
        )
    });
    let mut prediction = PredictionNet::new(
        &mut rng,
        in_channels,
        cfg.network.width,
        cfg.network.prediction_layers,
        out_dim,
    );
    harness::apply_checkpoint(&ckpt, selection.as_mut(), &mut prediction)?;
    let stats = evaluate_checkpoint(&cfg, selection.as_ref(), &prediction, &dataset)?;
    let report = serde_json::to_value(&stats)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = out {
        write_json(&dir.join("eval.json"), &report)?;
    }
    Ok(())
}

fn rand_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand_chacha::rand_core::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { config, seed, out } => run_generate(config, *seed, out).map(|()| true),
        Command::Verify { seed, out } => run_verify(*seed, out.as_deref()),
        Command::PolicySim {
            l,
            n,
            trials,
            seed,
            out,
        } => run_policy_sim(*l, *n, *trials, *seed, out.as_deref()).map(|()| true),
        Command::Train { config, seed, out } => run_train(config, *seed, out).map(|()| true),
        Command::Eval {
            config,
            checkpoint,
            data,
            out,
        } => run_eval(config, checkpoint, data, out.as_deref()).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::FAILURE
        }
    }
}
