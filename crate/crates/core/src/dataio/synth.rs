//! Synthetic front-view impeller images.
//!
//! Each image is a bright rim (annulus) joined to a hub by radial spokes on a
//! dark background, with per-image jitter of center, radius and rotation plus
//! Gaussian sensor noise. Defective images carry one flaw, equally often a
//! notch cut through the rim or a blow hole enclosed by the rim.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::{ImageRecord, Label};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const BACKGROUND: f64 = 0.12;
const RIM: f64 = 0.80;
const HUB: f64 = 0.70;
const SPOKE: f64 = 0.45;
const NOISE_SIGMA: f64 = 0.02;
const SPOKES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Defect {
    Notch { angle: f64 },
    Hole { angle: f64 },
}

#[derive(Debug, Clone)]
struct Impeller {
    cx: f64,
    cy: f64,
    outer: f64,
    inner: f64,
    hub: f64,
    spokes: usize,
    phase: f64,
    defect: Option<Defect>,
}

impl Impeller {
    fn sample(rng: &mut impl Rng, size: usize, defective: bool) -> Self {
        let s = size as f64;
        let outer = 0.40 * s * rng.random_range(0.9..1.1);
        let spokes = SPOKES;
        let defect = defective.then(|| {
            let angle = rng.random_range(0.0..TAU);
            if rng.random_bool(0.5) {
                Defect::Notch { angle }
            } else {
                Defect::Hole { angle }
            }
        });
        Self {
            cx: s / 2.0 + s * rng.random_range(-0.03..0.03),
            cy: s / 2.0 + s * rng.random_range(-0.03..0.03),
            outer,
            inner: 0.72 * outer,
            hub: 0.24 * outer,
            spokes,
            phase: rng.random_range(0.0..TAU),
            defect,
        }
    }

    fn intensity(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let r = dx.hypot(dy);
        let theta = dy.atan2(dx);
        let rim_width = self.outer - self.inner;

        if r >= self.inner && r <= self.outer {
            match self.defect {
                Some(Defect::Notch { angle })
                    if angle_gap(theta, angle) <= 0.45 =>
                {
                    return BACKGROUND;
                }
                Some(Defect::Hole { angle }) => {
                    let mid = 0.5 * (self.inner + self.outer);
                    let (hx, hy) = (mid * angle.cos(), mid * angle.sin());
                    if (dx - hx).hypot(dy - hy) <= 0.4 * rim_width {
                        return BACKGROUND;
                    }
                }
                _ => {}
            }
            // slight radial shading across the rim
            return RIM - 0.08 * (r - self.inner) / rim_width;
        }
        if r <= self.hub {
            return HUB;
        }
        if r < self.inner {
            let half_width = 0.09 * self.outer;
            for j in 0..self.spokes {
                let a = self.phase + TAU * j as f64 / self.spokes as f64;
                let along = dx * a.cos() + dy * a.sin();
                let across = (dy * a.cos() - dx * a.sin()).abs();
                if along <= 0.0 || across > half_width {
                    continue;
                }
                return SPOKE;
            }
        }
        BACKGROUND
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Keeps the label shuffle independent of other shuffles seeded with the
/// same run seed.
const LABEL_STREAM: u64 = 0x1ABE_15ED_0000_0000;

/// Seed of image `index` within a run seeded with `seed`.
fn image_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn render(size: usize, seed: u64, defective: bool) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let imp = Impeller::sample(&mut rng, size, defective);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let v = imp.intensity(x as f64 + 0.5, y as f64 + 0.5) + noise.sample(&mut rng);
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Tensor::new(vec![size, size, 1], data)
}

fn defect_labels(n: usize, defect_fraction: f64, seed: u64) -> Vec<Label> {
    let k = (n as f64 * defect_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(image_seed(seed ^ LABEL_STREAM, 0)));
    let mut labels = vec![Label::Ok; n];
    for &i in &order[..k.min(n)] {
        labels[i] = Label::Defective;
    }
    labels
}

/// Renders `n` labeled impeller images; exactly `round(n * defect_fraction)`
/// of them are defective. Identical arguments give identical pixels.
pub fn synth_generate(
    n: usize,
    defect_fraction: f64,
    image_size: usize,
    seed: u64,
) -> Result<Vec<ImageRecord>> {
    Ok(generate_with_seeds(n, defect_fraction, image_size, seed)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

fn generate_with_seeds(
    n: usize,
    defect_fraction: f64,
    image_size: usize,
    seed: u64,
) -> Result<Vec<(ImageRecord, u64)>> {
    if n < 1 {
        return Err(Error::invalid("synthetic dataset needs n >= 1"));
    }
    if !(0.0..=1.0).contains(&defect_fraction) {
        return Err(Error::invalid(format!(
            "defect fraction must be in [0, 1], got {defect_fraction}"
        )));
    }
    if image_size < 32 {
        return Err(Error::invalid(format!(
            "synthetic images need size >= 32, got {image_size}"
        )));
    }
    let labels = defect_labels(n, defect_fraction, seed);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let s = image_seed(seed, i);
            let pixels = render(image_size, s, label == Label::Defective)?;
            Ok((ImageRecord::new(pixels, label, format!("synth-{seed}-{i:05}"))?, s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SynthManifestRow {
    pub source_id: String,
    pub label: u8,
    pub seed: u64,
}

/// Writes a synthetic dataset in the `train|test / ok_front|def_front`
/// layout as 8-bit PNGs plus `manifest.csv` (`source_id,label,seed`).
///
/// The test split is generated with `seed + 1`.
pub fn write_synth_dataset(
    root: impl AsRef<Path>,
    n_train: usize,
    n_test: usize,
    defect_fraction: f64,
    image_size: usize,
    seed: u64,
) -> Result<Vec<SynthManifestRow>> {
    let root = root.as_ref();
    let mut manifest = Vec::with_capacity(n_train + n_test);
    for (split, n, split_seed) in [("train", n_train, seed), ("test", n_test, seed.wrapping_add(1))] {
        for (_, label) in super::CLASS_DIRS {
            fs::create_dir_all(root.join(split).join(label.dir_name()))?;
        }
        for (record, s) in generate_with_seeds(n, defect_fraction, image_size, split_seed)? {
            let (h, w) = record.size();
            let mut img = GrayImage::new(w as u32, h as u32);
            for (i, v) in record.pixels.data().iter().enumerate() {
                let px = (v * 255.0).round().clamp(0.0, 255.0) as u8;
                img.put_pixel((i % w) as u32, (i / w) as u32, Luma([px]));
            }
            let path = root
                .join(split)
                .join(record.label.dir_name())
                .join(format!("{}.png", record.source_id));
            img.save(&path)
                .map_err(|e| Error::data(&path, e.to_string()))?;
            manifest.push(SynthManifestRow {
                source_id: record.source_id,
                label: record.label as u8,
                seed: s,
            });
        }
    }
    let mut w = csv::Writer::from_path(root.join("manifest.csv"))?;
    for row in &manifest {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(manifest)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_defect_count() {
        let recs = synth_generate(100, 0.5, 32, 1).unwrap();
        assert_eq!(recs.iter().filter(|r| r.label == Label::Defective).count(), 50);
        let none = synth_generate(20, 0.0, 32, 1).unwrap();
        assert!(none.iter().all(|r| r.label == Label::Ok));
        let odd = synth_generate(7, 0.3, 32, 1).unwrap();
        assert_eq!(odd.iter().filter(|r| r.label == Label::Defective).count(), 2);
    }

    #[test]
    fn deterministic_pixels() {
        let a = synth_generate(6, 0.5, 40, 9).unwrap();
        let b = synth_generate(6, 0.5, 40, 9).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(6, 0.5, 40, 10).unwrap();
        assert_ne!(a[0].pixels, c[0].pixels);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synth_generate(0, 0.5, 64, 1).is_err());
        assert!(synth_generate(10, 1.5, 64, 1).is_err());
        assert!(synth_generate(10, 0.5, 31, 1).is_err());
    }

    #[test]
    fn class_prototypes_differ() {
        let recs = synth_generate(200, 0.5, 48, 4).unwrap();
        let mean = |label: Label| {
            let imgs: Vec<&ImageRecord> = recs.iter().filter(|r| r.label == label).collect();
            let mut acc = vec![0.0f64; 48 * 48];
            for r in &imgs {
                for (a, v) in acc.iter_mut().zip(r.pixels.data()) {
                    *a += *v as f64 / imgs.len() as f64;
                }
            }
            acc
        };
        let (ok, def) = (mean(Label::Ok), mean(Label::Defective));
        let diff: f64 = ok.iter().zip(&def).map(|(a, b)| (a - b).abs()).sum::<f64>() / ok.len() as f64;
        assert!(diff > 0.0);
    }

    #[test]
    fn writes_layout_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let rows = write_synth_dataset(tmp.path(), 6, 4, 0.5, 32, 3).unwrap();
        assert_eq!(rows.len(), 10);
        let ds = crate::dataio::load_dataset(tmp.path()).unwrap();
        assert_eq!((ds.train.len(), ds.test.len()), (6, 4));
        let manifest = fs::read_to_string(tmp.path().join("manifest.csv")).unwrap();
        assert!(manifest.starts_with("source_id,label,seed\n"));
    }
}
