//! Uncertainty scores of every metric against the error of unlabeled
//! estimates, as a correlation matrix.

use alflow::harness::{run_experiment, DatasetSource, ExperimentConfig};
use alflow::synth::DatasetSpec;
use alflow::uncertainty::Metric;

fn main() -> alflow::Result<()> {
    let cfg = ExperimentConfig {
        dataset: DatasetSource::Synth(DatasetSpec {
            count: 30,
            ..DatasetSpec::default()
        }),
        metrics: Metric::ALL.to_vec(),
        budgets: vec![alflow::Budget::new(0.0)?],
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    for m in Metric::ALL {
        let r = report.corr.by_name(m.name(), "epe").unwrap_or(f64::NAN);
        println!("{:<16} pearson with EPE {r:+.3}", m.name());
    }
    println!();
    print!("{}", String::from_utf8_lossy(&report.corr.to_csv()?));
    Ok(())
}
