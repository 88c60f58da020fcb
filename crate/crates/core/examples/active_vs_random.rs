//! Top-k selection by each uncertainty metric against random selection at
//! a fixed label budget.
//!
//! `cargo run --release --example active_vs_random -- [ratio]`

use alflow::harness::{run_experiment, ExperimentConfig};
use alflow::uncertainty::{Metric, Strategy};
use alflow::Budget;

fn main() -> alflow::Result<()> {
    let ratio: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let metrics = vec![Metric::PhotoLoss, Metric::OccRatio, Metric::FlowGradNorm];
    let cfg = ExperimentConfig {
        budgets: vec![Budget::new(ratio)?],
        strategies: vec![Strategy::Random, Strategy::Topk, Strategy::Occ2x],
        metrics: metrics.clone(),
        seeds: vec![0, 1, 2, 3, 4],
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    let show = |label: String, v: Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        println!("{label:<24} mean EPE {mean:.3}");
    };
    println!("label ratio {ratio}");
    show("random".into(), report.arm_epe(Strategy::Random, None, ratio));
    for m in metrics {
        show(format!("topk {m}"), report.arm_epe(Strategy::Topk, Some(m), ratio));
        show(format!("occ2x {m}"), report.arm_epe(Strategy::Occ2x, Some(m), ratio));
    }
    Ok(())
}
