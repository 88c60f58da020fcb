//! Coarse-to-fine flow estimation on synthetic samples, with and without
//! the ground-truth label in the objective.

use alflow::analysis::epe;
use alflow::estimator::{optimize_flow, OptimizerConfig};
use alflow::synth::{gen_dataset, DatasetSpec, DifficultyCurve};
use alflow::LossConfig;

fn main() -> alflow::Result<()> {
    let loss = LossConfig::default();
    let opt = OptimizerConfig::default();
    let ds = gen_dataset(&DatasetSpec {
        count: 6,
        difficulty: DifficultyCurve::Linear,
        ..DatasetSpec::default()
    })?;
    println!("{:<12} {:>10} {:>14} {:>12}", "id", "difficulty", "EPE unlabeled", "EPE labeled");
    for s in &ds.samples {
        let unlabeled = optimize_flow(&s.sample, false, &opt, &loss)?;
        let labeled = optimize_flow(&s.sample, true, &opt, &loss)?;
        println!(
            "{:<12} {:>10.2} {:>14.3} {:>12.3}",
            s.sample.id,
            s.difficulty,
            epe(&unlabeled.forward, &s.gt_forward)?,
            epe(&labeled.forward, &s.gt_forward)?
        );
    }
    Ok(())
}
