//! Write a flow field as Middlebury `.flo` and as a KITTI 16-bit PNG, read
//! both back and report the round-trip error.
//!
//! `cargo run --example flow_formats -- [out_dir]`

use std::path::PathBuf;

use alflow::io::{load_flow, save_flow};
use alflow::FlowField;

fn max_error(a: &FlowField, b: &FlowField) -> f64 {
    let mut worst: f64 = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if a.is_valid(x, y) {
                let (p, q) = (a.get(x, y), b.get(x, y));
                worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
            }
        }
    }
    worst
}

fn main() -> alflow::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("alflow_formats"));

    // a swirl with a sparse validity mask, as KITTI ground truth would have
    let (w, h) = (96, 64);
    let swirl = FlowField::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - 48.0, y as f64 - 32.0);
        [-0.1 * dy + 0.37, 0.1 * dx - 1.21]
    });
    let valid = (0..w * h).map(|i| (i * 7919) % 5 != 0).collect();
    let flow = swirl.with_valid(valid)?;

    for name in ["swirl.flo", "swirl.png"] {
        let path = dir.join(name);
        save_flow(&path, &flow)?;
        let back = load_flow(&path)?;
        println!(
            "{}: {} bytes, {} of {} pixels valid, max error {:.5} px",
            path.display(),
            std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
            back.valid_count(),
            back.len(),
            max_error(&flow, &back)
        );
    }
    Ok(())
}
