//! Finite-difference check of the estimator's analytic gradients.
//!
//! `cargo run --example gradient_check -- [seed]`

use alflow::estimator::gradcheck::{gradient_check, TOLERANCE};

fn main() -> alflow::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let report = gradient_check(seed, 10)?;
    println!("{:>20} {:>11} {:>11} {:>11} {:>11}", "seed", "photometric", "smoothness", "supervised", "joint");
    for r in &report.instances {
        println!(
            "{:>20} {:>11.2e} {:>11.2e} {:>11.2e} {:>11.2e}",
            r.seed, r.photometric, r.smoothness, r.supervised, r.joint
        );
    }
    println!(
        "max relative error {:.2e} (tolerance {TOLERANCE:e}): {}",
        report.max_error(),
        if report.passed() { "ok" } else { "FAILED" }
    );
    Ok(())
}
