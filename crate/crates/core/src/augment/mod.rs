//! Training-time augmentation: flips, rotation, zoom and ZCA whitening.
//!
//! Geometric ops take `(H, W, C)` images, sample with bilinear interpolation
//! and fill out-of-bounds samples with zero. Output shape equals input shape.

mod zca;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::ImageRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use zca::{zca_apply, zca_fit, ZcaTransform, ZCA_MAX_DIM};

/// Seed of the published augmented test set.
pub const AUGMENTED_TEST_SEED: u64 = 2022;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub rotation_max_deg: f64,
    /// `(lo, hi)` with `0 < lo <= 1 <= hi`.
    pub zoom_range: (f64, f64),
    /// Whitening is only supported for images of at most 96x96 pixels.
    pub zca: bool,
    pub zca_epsilon: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            horizontal_flip: true,
            vertical_flip: true,
            rotation_max_deg: 15.0,
            zoom_range: (0.9, 1.1),
            zca: false,
            zca_epsilon: 1e-6,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every transform off.
    pub fn disabled() -> Self {
        Self {
            horizontal_flip: false,
            vertical_flip: false,
            rotation_max_deg: 0.0,
            zoom_range: (1.0, 1.0),
            zca: false,
            zca_epsilon: 1e-6,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.rotation_max_deg) {
            return Err(Error::Config(format!(
                "rotation_max_deg must be in [0, 180], got {}",
                self.rotation_max_deg
            )));
        }
        let (lo, hi) = self.zoom_range;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!(
                "zoom_range must satisfy 0 < lo <= 1 <= hi, got ({lo}, {hi})"
            )));
        }
        if self.zca_epsilon.is_nan() || self.zca_epsilon < 0.0 {
            return Err(Error::Config("zca_epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror left-right (reverse columns).
    Horizontal,
    /// Mirror top-bottom (reverse rows).
    Vertical,
}

fn dims3(image: &Tensor) -> Result<(usize, usize, usize)> {
    match image.shape()[..] {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::shape(format!(
            "expected an (H, W, C) image, got {:?}",
            image.shape()
        ))),
    }
}

pub fn flip(image: &Tensor, axis: FlipAxis) -> Result<Tensor> {
    let (h, w, c) = dims3(image)?;
    let src = image.data();
    Tensor::from_fn(image.shape().to_vec(), |i| {
        let (y, x, ch) = (i / (w * c), (i / c) % w, i % c);
        let (sy, sx) = match axis {
            FlipAxis::Horizontal => (y, w - 1 - x),
            FlipAxis::Vertical => (h - 1 - y, x),
        };
        src[(sy * w + sx) * c + ch]
    })
}

/// Resamples `image` through an inverse map from output pixel centers to
/// source coordinates, both measured from the image center.
fn resample(image: &Tensor, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Result<Tensor> {
    let (h, w, c) = dims3(image)?;
    let src = image.data();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() < 1e-9 {
            r
        } else {
            v
        }
    };
    let sample = |yy: isize, xx: isize, ch: usize| -> f64 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            src[(yy as usize * w + xx as usize) * c + ch] as f64
        }
    };
    let mut out = Vec::with_capacity(image.len());
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = inverse(y as f64 - cy, x as f64 - cx);
            let sy = snap(sy + cy);
            let sx = snap(sx + cx);
            let y0 = sy.floor();
            let x0 = sx.floor();
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            for ch in 0..c {
                let v = (1.0 - fy) * ((1.0 - fx) * sample(y0, x0, ch) + fx * sample(y0, x0 + 1, ch))
                    + fy * ((1.0 - fx) * sample(y0 + 1, x0, ch) + fx * sample(y0 + 1, x0 + 1, ch));
                out.push(v as f32);
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out)
}

/// Rotates about the image center; positive angles turn the content
/// counter-clockwise as displayed (rows grow downward).
pub fn rotate(image: &Tensor, degrees: f64) -> Result<Tensor> {
    if degrees.is_nan() || degrees.abs() > 180.0 {
        return Err(Error::invalid(format!("rotation must be within ±180°, got {degrees}")));
    }
    if degrees == 0.0 {
        dims3(image)?;
        return Ok(image.clone());
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    resample(image, |dy, dx| (dy * cos + dx * sin, dx * cos - dy * sin))
}

/// Scales about the center: `factor > 1` magnifies (and crops), `factor < 1`
/// shrinks (and pads with zeros).
pub fn zoom(image: &Tensor, factor: f64) -> Result<Tensor> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("zoom factor must be positive, got {factor}")));
    }
    if factor == 1.0 {
        dims3(image)?;
        return Ok(image.clone());
    }
    resample(image, |dy, dx| (dy / factor, dx / factor))
}

/// Random draws applied to one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub angle_deg: f64,
    pub zoom: f64,
}

/// Draws for image `index`. The stream is seeded with `config.seed ^ index`,
/// so draws do not depend on processing order or thread count.
pub fn draw_params(config: &AugmentConfig, index: u64) -> AugmentDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ index);
    let horizontal_flip = config.horizontal_flip && rng.random_bool(0.5);
    let vertical_flip = config.vertical_flip && rng.random_bool(0.5);
    let angle_deg = if config.rotation_max_deg > 0.0 {
        rng.random_range(-config.rotation_max_deg..=config.rotation_max_deg)
    } else {
        0.0
    };
    let (lo, hi) = config.zoom_range;
    let zoom = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    AugmentDraw {
        horizontal_flip,
        vertical_flip,
        angle_deg,
        zoom,
    }
}

/// Flips, then rotation, then zoom, then ZCA (when given).
pub fn augment_image(
    image: &Tensor,
    draw: &AugmentDraw,
    zca: Option<&ZcaTransform>,
) -> Result<Tensor> {
    let mut img = image.clone();
    if draw.horizontal_flip {
        img = flip(&img, FlipAxis::Horizontal)?;
    }
    if draw.vertical_flip {
        img = flip(&img, FlipAxis::Vertical)?;
    }
    img = rotate(&img, draw.angle_deg)?;
    img = zoom(&img, draw.zoom)?;
    if let Some(t) = zca {
        img = zca_apply(t, &img)?;
    }
    Ok(img)
}

/// Augments every image of a `(B, H, W, C)` batch. Image `i` uses the stream
/// of global index `first_index + i`.
///
/// `zca` is applied only when `config.zca` is set.
pub fn augment_batch(
    config: &AugmentConfig,
    batch: &Tensor,
    zca: Option<&ZcaTransform>,
    first_index: u64,
) -> Result<Tensor> {
    let (n, h, w, c) = batch.dims4()?;
    let zca = if config.zca {
        Some(zca.ok_or_else(|| Error::Config("zca enabled but no transform was fitted".into()))?)
    } else {
        None
    };
    let size = h * w * c;
    let images: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let img = Tensor::new(vec![h, w, c], batch.data()[i * size..(i + 1) * size].to_vec())?;
            let draw = draw_params(config, first_index + i as u64);
            Ok(augment_image(&img, &draw, zca)?.into_data())
        })
        .collect::<Result<_>>()?;
    Tensor::new(batch.shape().to_vec(), images.concat())
}

/// The augmented copy of a test set: geometric augmentation of every record
/// with `config` reseeded to [`AUGMENTED_TEST_SEED`]. ZCA is not applied here.
///
/// Pixel values are clamped back into `[0, 1]` so the result remains a valid
/// record list.
pub fn augmented_test_set(records: &[ImageRecord], config: &AugmentConfig) -> Result<Vec<ImageRecord>> {
    let cfg = AugmentConfig {
        seed: AUGMENTED_TEST_SEED,
        zca: false,
        ..*config
    };
    cfg.validate()?;
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let draw = draw_params(&cfg, i as u64);
            let img = augment_image(&r.pixels, &draw, None)?;
            let data = img.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
            ImageRecord::new(
                Tensor::new(img.shape().to_vec(), data)?,
                r.label,
                format!("{}#aug", r.source_id),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, data: Vec<f32>) -> Tensor {
        Tensor::new(vec![h, w, 1], data).unwrap()
    }

    #[test]
    fn flips() {
        let t = img(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(flip(&t, FlipAxis::Horizontal).unwrap().data(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(flip(&t, FlipAxis::Vertical).unwrap().data(), &[3.0, 4.0, 1.0, 2.0]);
        let sym = img(2, 3, vec![1.0, 5.0, 1.0, 2.0, 7.0, 2.0]);
        assert_eq!(flip(&sym, FlipAxis::Horizontal).unwrap(), sym);
    }

    #[test]
    fn rotate_half_turn_is_exact() {
        let t = img(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(rotate(&t, 180.0).unwrap().data(), &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(rotate(&t, -180.0).unwrap().data(), &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(rotate(&t, 0.0).unwrap(), t);
        assert!(rotate(&t, 181.0).is_err());
    }

    #[test]
    fn quarter_turn_moves_top_row_to_left_column() {
        let t = img(3, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let r = rotate(&t, 90.0).unwrap();
        // counter-clockwise: top row ends up on the left, read bottom to top
        assert_eq!(r.data(), &[3.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rotate_45_keeps_interior_and_darkens_corners() {
        let t = Tensor::full(vec![21, 21, 1], 0.6f32).unwrap();
        let r = rotate(&t, 45.0).unwrap();
        assert!((r.data()[10 * 21 + 10] - 0.6).abs() < 1e-6);
        assert!((r.data()[8 * 21 + 12] - 0.6).abs() < 1e-6);
        assert_eq!(r.data()[0], 0.0);
        assert_eq!(r.data()[20 * 21 + 20], 0.0);
    }

    #[test]
    fn zoom_behaviour() {
        let t = Tensor::full(vec![9, 9, 1], 0.3f32).unwrap();
        assert_eq!(zoom(&t, 1.0).unwrap(), t);
        for f in [1.0, 1.3, 2.0, 3.7] {
            let z = zoom(&t, f).unwrap();
            assert!(z.data().iter().all(|v| (v - 0.3).abs() < 1e-6), "factor {f}");
        }
        assert!(zoom(&t, 0.0).is_err());
        assert!(zoom(&t, -1.0).is_err());
    }

    #[test]
    fn zoom_doubles_square_side() {
        let n = 64;
        let square = Tensor::from_fn(vec![n, n, 1], |i| {
            let (y, x) = (i / n, i % n);
            if (24..40).contains(&y) && (24..40).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let area = |t: &Tensor| t.data().iter().filter(|&&v| v >= 0.5).count() as f64;
        let ratio = area(&zoom(&square, 2.0).unwrap()) / area(&square);
        assert!((ratio - 4.0).abs() <= 0.4, "area ratio {ratio}");
    }

    #[test]
    fn disabled_config_is_identity_and_seeded_replay_is_exact() {
        let batch = Tensor::from_fn(vec![3, 8, 8, 1], |i| (i % 13) as f32 / 13.0).unwrap();
        let out = augment_batch(&AugmentConfig::disabled(), &batch, None, 0).unwrap();
        assert_eq!(out, batch);

        let cfg = AugmentConfig {
            seed: 5,
            ..AugmentConfig::default()
        };
        let a = augment_batch(&cfg, &batch, None, 10).unwrap();
        let b = augment_batch(&cfg, &batch, None, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), batch.shape());
        assert!(a.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zca_enabled_without_transform_is_an_error() {
        let cfg = AugmentConfig {
            zca: true,
            ..AugmentConfig::disabled()
        };
        let batch = Tensor::zeros(vec![1, 4, 4, 1]).unwrap();
        assert!(augment_batch(&cfg, &batch, None, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig {
            rotation_max_deg: 200.0,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            zoom_range: (1.2, 1.5),
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
