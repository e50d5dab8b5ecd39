//! Trains CastNet-Tiny on a synthetic impeller dataset and reports test
//! metrics with and without augmentation of the test set.
//!
//! ```text
//! cargo run --release --example train_castnet -- [seed] [out_dir]
//! ```

use std::path::PathBuf;

use castnet::augment::{augmented_test_set, AugmentConfig};
use castnet::dataio::{split_train_val, synth_generate, DatasetSplit};
use castnet::eval::{evaluate, percent, DatasetTag};
use castnet::model::{save_model, ModelSpec};
use castnet::train::{fit, write_training_log, TrainConfig};

fn main() -> castnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed must be an integer")).unwrap_or(7);
    let out = args.next().map(PathBuf::from);

    let records = synth_generate(400, 0.5, 64, seed)?;
    let test = synth_generate(100, 0.5, 64, seed + 1)?;
    let (train, validation) = split_train_val(records, 0.2, seed)?;
    let split = DatasetSplit { train, validation, test, seed };

    let spec = ModelSpec::castnet_tiny((64, 64, 1))?;
    let cfg = TrainConfig::desk_scale(seed);
    let started = std::time::Instant::now();
    let outcome = fit(&spec, &split, &cfg)?;
    println!(
        "trained {} epochs in {:.1}s, best epoch {}, stopped early: {}",
        outcome.logs.len(),
        started.elapsed().as_secs_f64(),
        outcome.best_epoch,
        outcome.stopped_early
    );
    for l in &outcome.logs {
        println!(
            "epoch {:>3}  train {:.4}  val {:.4}  val_acc {:.3}  lr {:.1e}  {:.2}s",
            l.epoch, l.train_loss, l.val_loss, l.val_accuracy, l.lr, l.wall_time_s
        );
    }

    let standard = evaluate(&outcome.model, &split.test, DatasetTag::Standard, "castnet-tiny")?;
    let aug_test = augmented_test_set(&split.test, &AugmentConfig::default())?;
    let augmented = evaluate(&outcome.model, &aug_test, DatasetTag::Augmented, "castnet-tiny")?;
    for r in [&standard, &augmented] {
        println!(
            "{:<9} acc {}  precision {}  recall {}  f1 {}",
            r.dataset_tag.to_string(),
            percent(r.accuracy),
            percent(r.precision),
            percent(r.recall),
            percent(r.f1)
        );
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        save_model(&outcome.model, dir.join("model.cnet"))?;
        write_training_log(&dir.join("training_log.csv"), &outcome.logs)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
