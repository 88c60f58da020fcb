//! Loss breakdown of one synthetic sample for the ground-truth flow, a
//! perturbed flow and zero flow, with and without the label.

use alflow::losses::{semi_supervised_sample_loss, FlowEstimate};
use alflow::synth::{gen_dataset, DatasetSpec};
use alflow::{FlowField, LossConfig};

fn main() -> alflow::Result<()> {
    let s = gen_dataset(&DatasetSpec {
        count: 1,
        ..DatasetSpec::default()
    })?
    .samples
    .remove(0);
    let (w, h) = s.sample.dims();
    let nudge = |f: &FlowField| FlowField::from_fn(w, h, |x, y| {
        let [u, v] = f.get(x, y);
        [u + 0.7, v - 0.4]
    });
    let candidates = [
        ("ground truth", s.gt_forward.clone(), s.gt_backward.clone()),
        ("perturbed", nudge(&s.gt_forward), nudge(&s.gt_backward)),
        ("zero", FlowField::zeros(w, h), FlowField::zeros(w, h)),
    ];

    for cfg in [LossConfig::default(), LossConfig::l1_ssim_phase()] {
        println!("distance weights (l1, ssim, census) = {:?}", cfg.census_weights);
        for (name, forward, backward) in &candidates {
            let est = FlowEstimate {
                forward: forward.clone(),
                backward: backward.clone(),
            };
            let unsup = semi_supervised_sample_loss(&s.unlabeled(), &est, &cfg)?;
            let sup = semi_supervised_sample_loss(&s.sample, &est, &cfg)?;
            println!(
                "  {name:<13} photometric {:.4}  smoothness {:.5}  unsupervised total {:.4}  supervised {:.4}",
                unsup.photometric, unsup.smoothness, unsup.total, sup.total
            );
        }
    }
    Ok(())
}
