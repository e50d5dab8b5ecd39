//! Writes a small synthetic impeller dataset in the
//! `train|test / ok_front|def_front` layout and loads it back.
//!
//! ```text
//! cargo run --release --example synth_dataset -- [out_dir]
//! ```

use castnet::dataio::{load_dataset, write_synth_dataset, Label};

fn main() -> castnet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth-data".into());
    let manifest = write_synth_dataset(&out, 40, 20, 0.5, 64, 7)?;
    println!("wrote {} PNGs and manifest.csv to {out}", manifest.len());

    let ds = load_dataset(&out)?;
    for (name, split) in [("train", &ds.train), ("test", &ds.test)] {
        let defective = split.iter().filter(|r| r.label == Label::Defective).count();
        let (h, w) = split[0].size();
        println!("{name}: {} images of {h}x{w}, {defective} defective", split.len());
    }
    Ok(())
}
