//! Trains CastNet-Tiny with and without augmentation on synthetic data and
//! evaluates both models on the standard and the augmented test set.
//!
//! ```text
//! cargo run --release --example aug_study -- [seed]
//! ```

use castnet::augment::AugmentConfig;
use castnet::cli::aug_study;
use castnet::dataio::{split_train_val, synth_generate, DatasetSplit};
use castnet::model::ModelSpec;
use castnet::train::TrainConfig;

fn main() -> castnet::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().expect("seed must be an integer")).unwrap_or(1);
    let size = 48;
    let records = synth_generate(400, 0.5, size, seed)?;
    let test = synth_generate(100, 0.5, size, seed + 1)?;
    let (train, validation) = split_train_val(records, 0.2, seed)?;
    let data = DatasetSplit { train, validation, test, seed };

    let spec = ModelSpec::castnet_tiny((size, size, 1))?;
    let train_cfg = TrainConfig { epochs_max: 40, ..TrainConfig::desk_scale(seed) };
    let augment = AugmentConfig { seed, ..AugmentConfig::default() };
    let study = aug_study(&spec, &data, &train_cfg, &augment)?;
    print!("{}", study.markdown());
    Ok(())
}
