//! Print the stored reference curves, or write one as CSV.
//!
//! `cargo run --example reference_curves -- [name out.csv]`

use std::path::Path;

use alflow::analysis::fixtures::{curve_fixture, names};
use alflow::harness::cmd_curves;

fn main() -> alflow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [name, out] = args.as_slice() {
        let points = cmd_curves(name, Path::new(out))?;
        println!("wrote {} points to {out}", points.len());
        return Ok(());
    }
    for name in names() {
        let row: Vec<String> = curve_fixture(name)?
            .iter()
            .map(|p| format!("{}@{}={:.3}", p.metric, p.ratio, p.value))
            .collect();
        println!("{name}\n  {}", row.join(" "));
    }
    Ok(())
}
