//! Applies flips, rotation and zoom to a synthetic image, shows the seeded
//! per-image draws, and whitens a batch with ZCA.
//!
//! ```text
//! cargo run --release --example augmentation
//! ```

use castnet::augment::{
    augment_batch, augmented_test_set, draw_params, flip, rotate, zca_apply, zca_fit, zoom, AugmentConfig,
    FlipAxis,
};
use castnet::dataio::{stack_records, synth_generate};

fn mean(values: &[f32]) -> f32 {
    values.iter().sum::<f32>() / values.len() as f32
}

fn main() -> castnet::Result<()> {
    let records = synth_generate(64, 0.5, 32, 3)?;
    let image = &records[0].pixels;
    println!("source mean intensity {:.4}", mean(image.data()));
    for (name, out) in [
        ("horizontal flip", flip(image, FlipAxis::Horizontal)?),
        ("vertical flip", flip(image, FlipAxis::Vertical)?),
        ("rotate 15 deg", rotate(image, 15.0)?),
        ("zoom 1.1", zoom(image, 1.1)?),
        ("zoom 0.9", zoom(image, 0.9)?),
    ] {
        println!("{name:<16} mean {:.4}", mean(out.data()));
    }

    let config = AugmentConfig { seed: 11, ..AugmentConfig::default() };
    for index in 0..3 {
        println!("draw for image {index}: {:?}", draw_params(&config, index));
    }

    let refs: Vec<_> = records.iter().collect();
    let batch = stack_records(&refs[..8])?;
    let augmented = augment_batch(&config, &batch, None, 0)?;
    println!("augmented batch shape {:?}", augmented.shape());

    let aug_test = augmented_test_set(&records[..4], &AugmentConfig::default())?;
    println!("augmented test ids: {:?}", aug_test.iter().map(|r| r.source_id.as_str()).collect::<Vec<_>>());

    let images: Vec<_> = records.iter().map(|r| &r.pixels).collect();
    let zca = zca_fit(&images, 1e-2)?;
    let white = zca_apply(&zca, image)?;
    println!("ZCA over {} pixels; whitened mean {:.4}", zca.dim(), mean(white.data()));
    Ok(())
}
