//! Recomputes the parameter, size and speed ratio tables from the published
//! reference constants and prints them next to the published ratios.
//!
//! ```text
//! cargo run --release --example reference_ratios
//! ```

use castnet::bench::{bench_markdown, reference_report, PUBLISHED_SPEED_RATIOS};

fn main() -> castnet::Result<()> {
    let report = reference_report()?;
    print!("{}", bench_markdown(&report));

    let recomputed = &report.ratios[1];
    let mut worst: f64 = 0.0;
    for (model, published) in PUBLISHED_SPEED_RATIOS {
        for (column, p) in recomputed.columns.iter().zip(published) {
            let r = recomputed.get(model, column).expect("cell present");
            worst = worst.max((r - p).abs());
        }
    }
    println!("largest gap between recomputed and published speed ratios: {worst:.4}");
    Ok(())
}
