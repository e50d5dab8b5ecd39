//! Times CastNet-Tiny inference on one thread over several batch sizes and
//! writes the latency and ratio files.
//!
//! ```text
//! cargo run --release --example latency_sweep -- [out_dir]
//! ```

use castnet::bench::{emit_report, latency_sweep, speed_ratios, BenchReport, TimingConfig, DEFAULT_BATCH_SIZES};
use castnet::dataio::synth_generate;
use castnet::model::{Model, ModelSpec};

fn main() -> castnet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "latency".into());
    let model = Model::init(ModelSpec::castnet_tiny((64, 64, 1))?, 0)?;
    let records = synth_generate(200, 0.5, 64, 5)?;
    // 715 exceeds the 200 records and is dropped from the sweep.
    let report = latency_sweep(&model, "castnet-tiny", &records, &DEFAULT_BATCH_SIZES, &TimingConfig::default())?;
    println!("batch  n_batches  total_s    per_batch_s  per_image_s");
    for r in &report.rows {
        println!(
            "{:>5}  {:>9}  {:.6}  {:.6}     {:.6}",
            r.batch_size, r.n_batches, r.total_s, r.per_batch_s, r.per_image_s
        );
    }
    let ratios = speed_ratios(std::slice::from_ref(&report), "castnet-tiny")?;
    let paths = emit_report(&BenchReport { latency: vec![report], ratios: vec![ratios] }, &out)?;
    println!("wrote {} files to {out}", paths.len());
    Ok(())
}
