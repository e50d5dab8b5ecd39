//! Builds CastNet-Tiny, prints its layer shapes and parameter counts, and
//! round-trips it through the CNET1 weight file.
//!
//! ```text
//! cargo run --release --example model_io -- [path]
//! ```

use castnet::dataio::{stack_records, synth_generate};
use castnet::model::{load_model, save_model, Model, ModelSpec, HEADER_LEN};

fn main() -> castnet::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "castnet-tiny.cnet".into());
    let spec = ModelSpec::castnet_tiny((64, 64, 1))?;
    for (layer, shape) in spec.layers.iter().zip(spec.activation_shapes()?.iter()) {
        println!("{layer:?} -> {shape:?}");
    }
    let counts = spec.count_params();
    println!(
        "params: total {}, trainable {}, non-trainable {}",
        counts.total, counts.trainable, counts.non_trainable
    );

    let model = Model::init(spec, 42)?;
    save_model(&model, &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!("wrote {path}: {bytes} bytes ({:.4} MB), header {HEADER_LEN} bytes", bytes as f64 / 1e6);

    let loaded = load_model(&path)?;
    let records = synth_generate(4, 0.5, 64, 1)?;
    let refs: Vec<_> = records.iter().collect();
    let batch = stack_records(&refs)?;
    let (a, b) = (model.predict(&batch)?, loaded.predict(&batch)?);
    println!("predictions before save {a:?}");
    println!("predictions after load  {b:?}");
    assert_eq!(a, b);
    Ok(())
}
