//! Final EPE as a function of the label ratio under random selection.
//!
//! `cargo run --release --example label_ratio_curve`

use alflow::harness::{run_experiment, ExperimentConfig};
use alflow::uncertainty::Strategy;
use alflow::Budget;

fn main() -> alflow::Result<()> {
    let ratios = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
    let cfg = ExperimentConfig {
        budgets: ratios.iter().map(|&r| Budget::new(r)).collect::<alflow::Result<_>>()?,
        strategies: vec![Strategy::Random],
        metrics: vec![],
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    println!("{:>6} {:>9}  per seed", "r", "mean EPE");
    for r in ratios {
        let runs = report.arm_epe(Strategy::Random, None, r);
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        let per: Vec<String> = runs.iter().map(|v| format!("{v:.3}")).collect();
        println!("{r:>6.2} {mean:>9.3}  {}", per.join(" "));
    }
    Ok(())
}
