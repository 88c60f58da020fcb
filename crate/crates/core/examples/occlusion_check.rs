//! Forward-backward consistency on ground-truth flow versus the true
//! occlusion of synthetic samples.

use alflow::flow_ops::fb_occlusion;
use alflow::synth::{gen_dataset, DatasetSpec, DifficultyCurve};
use alflow::LossConfig;

fn main() -> alflow::Result<()> {
    let cfg = LossConfig::default();
    let ds = gen_dataset(&DatasetSpec {
        count: 10,
        difficulty: DifficultyCurve::Linear,
        ..DatasetSpec::default()
    })?;
    println!("{:<12} {:>8} {:>8} {:>6}", "id", "gt occ", "fb occ", "IoU");
    for s in &ds.samples {
        let est = fb_occlusion(&s.gt_forward, &s.gt_backward, &cfg)?;
        println!(
            "{:<12} {:>7.1}% {:>7.1}% {:>6.3}",
            s.sample.id,
            100.0 * s.gt_occlusion.ratio(),
            100.0 * est.ratio(),
            est.iou(&s.gt_occlusion)
        );
    }
    Ok(())
}
