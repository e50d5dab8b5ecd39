//! Labeled grayscale images: loading, conversion, splitting, batching and
//! synthetic generation.

mod loader;
mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use loader::{load_dataset, load_dataset_resized, RawDataset, CLASS_DIRS};
pub use synth::{synth_generate, write_synth_dataset, SynthManifestRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Ok = 0,
    /// Positive class.
    Defective = 1,
}

impl Label {
    pub fn as_f32(self) -> f32 {
        self as u8 as f32
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Ok),
            1 => Ok(Label::Defective),
            _ => Err(Error::invalid(format!("label must be 0 or 1, got {v}"))),
        }
    }

    /// Class directory name in the on-disk layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Ok => "ok_front",
            Label::Defective => "def_front",
        }
    }
}

/// One grayscale image with values in `[0, 1]` and shape `(H, W, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub pixels: Tensor,
    pub label: Label,
    pub source_id: String,
}

impl ImageRecord {
    pub fn new(pixels: Tensor, label: Label, source_id: impl Into<String>) -> Result<Self> {
        match pixels.shape() {
            [_, _, 1] => {}
            s => return Err(Error::shape(format!("records hold (H, W, 1) images, got {s:?}"))),
        }
        if pixels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("record pixels must lie in [0, 1]"));
        }
        Ok(Self {
            pixels,
            label,
            source_id: source_id.into(),
        })
    }

    /// `(H, W)` of the image.
    pub fn size(&self) -> (usize, usize) {
        (self.pixels.shape()[0], self.pixels.shape()[1])
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<ImageRecord>,
    pub validation: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
    /// Seed of the train/validation shuffle.
    pub seed: u64,
}

/// BT.601 luma of an `(H, W, 3)` image, values kept in the input range.
pub fn to_grayscale(rgb: &Tensor) -> Result<Tensor> {
    let [h, w, 3] = rgb.shape()[..] else {
        return Err(Error::shape(format!(
            "grayscale conversion needs (H, W, 3), got {:?}",
            rgb.shape()
        )));
    };
    let data = rgb
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    Tensor::new(vec![h, w, 1], data)
}

/// Maps `[0, 255]` onto `[0, 1]`.
pub fn rescale(gray: &Tensor) -> Result<Tensor> {
    if let Some(v) = gray.data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::invalid(format!("pixel value {v} outside [0, 255]")));
    }
    let data = gray.data().iter().map(|v| v / 255.0).collect();
    Tensor::new(gray.shape().to_vec(), data)
}

/// Seeded, unstratified shuffle; the first `floor(fraction * n)` shuffled
/// records become the validation set.
pub fn split_train_val(
    records: Vec<ImageRecord>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let n = records.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 records to split, got {n}")));
    }
    let n_val = (val_fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<ImageRecord>> = records.into_iter().map(Some).collect();
    let validation = order[..n_val]
        .iter()
        .map(|&i| slots[i].take().expect("index used once"))
        .collect();
    let train = order[n_val..]
        .iter()
        .map(|&i| slots[i].take().expect("index used once"))
        .collect();
    Ok((train, validation))
}

/// How a record list is cut into batches. The last batch may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub drop_last: bool,
}

impl BatchPlan {
    pub fn sequential(batch_size: usize) -> Self {
        Self {
            batch_size,
            shuffle: false,
            seed: 0,
            drop_last: false,
        }
    }

    pub fn shuffled(batch_size: usize, seed: u64) -> Self {
        Self {
            batch_size,
            shuffle: true,
            seed,
            drop_last: false,
        }
    }

    pub fn num_batches(&self, n: usize) -> usize {
        if self.drop_last {
            n / self.batch_size.max(1)
        } else {
            n.div_ceil(self.batch_size.max(1))
        }
    }

    /// Record indices of each batch.
    pub fn order(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        if self.batch_size < 1 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        if self.shuffle {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        }
        let mut batches: Vec<Vec<usize>> =
            idx.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
        if self.drop_last && batches.last().is_some_and(|b| b.len() < self.batch_size) {
            batches.pop();
        }
        Ok(batches)
    }
}

/// A stacked `(B, H, W, 1)` batch with its labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<f32>,
    pub indices: Vec<usize>,
}

pub fn stack_records(records: &[&ImageRecord]) -> Result<Tensor> {
    let pixels: Vec<&Tensor> = records.iter().map(|r| &r.pixels).collect();
    Tensor::stack(&pixels)
}

pub fn make_batches(records: &[ImageRecord], plan: &BatchPlan) -> Result<Vec<Batch>> {
    if records.is_empty() {
        return Err(Error::invalid("cannot batch an empty record list"));
    }
    plan.order(records.len())?
        .into_iter()
        .map(|indices| {
            let refs: Vec<&ImageRecord> = indices.iter().map(|&i| &records[i]).collect();
            Ok(Batch {
                images: stack_records(&refs)?,
                labels: refs.iter().map(|r| r.label.as_f32()).collect(),
                indices,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<ImageRecord> {
        (0..n)
            .map(|i| {
                let px = Tensor::full(vec![2, 2, 1], (i % 10) as f32 / 10.0).unwrap();
                let label = if i % 2 == 0 { Label::Ok } else { Label::Defective };
                ImageRecord::new(px, label, format!("r{i}")).unwrap()
            })
            .collect()
    }

    #[test]
    fn luma_coefficients() {
        let t = Tensor::new(vec![1, 3, 3], vec![255.0, 255.0, 255.0, 0.0, 0.0, 0.0, 255.0, 0.0, 0.0])
            .unwrap();
        let g = to_grayscale(&t).unwrap();
        assert!((g.data()[0] - 255.0).abs() < 1e-4);
        assert_eq!(g.data()[1], 0.0);
        assert!((g.data()[2] - 76.245).abs() < 1e-4);
        assert!(to_grayscale(&Tensor::zeros(vec![2, 2, 1]).unwrap()).is_err());
    }

    #[test]
    fn rescale_maps_to_unit_range() {
        let t = Tensor::new(vec![4], vec![255.0, 0.0, 127.5, 76.245]).unwrap();
        let r = rescale(&t).unwrap();
        assert_eq!(&r.data()[..3], &[1.0, 0.0, 0.5]);
        assert!((r.data()[3] - 0.299).abs() < 1e-6);
        assert!(rescale(&Tensor::new(vec![1], vec![256.0]).unwrap()).is_err());
        assert!(rescale(&Tensor::new(vec![1], vec![-1.0]).unwrap()).is_err());
    }

    #[test]
    fn record_rejects_color_and_out_of_range() {
        assert!(ImageRecord::new(Tensor::zeros(vec![2, 2, 3]).unwrap(), Label::Ok, "x").is_err());
        assert!(ImageRecord::new(Tensor::full(vec![2, 2, 1], 1.5).unwrap(), Label::Ok, "x").is_err());
    }

    #[test]
    fn split_counts_follow_floor_rule() {
        let (train, val) = split_train_val(records(10), 0.2, 3).unwrap();
        assert_eq!((train.len(), val.len()), (8, 2));
        assert_eq!((0.2f64 * 6633.0).floor() as usize, 1326);
        assert!(split_train_val(records(1), 0.2, 3).is_err());
        assert!(split_train_val(records(5), 1.0, 3).is_err());
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let (a_train, a_val) = split_train_val(records(50), 0.2, 9).unwrap();
        let (b_train, b_val) = split_train_val(records(50), 0.2, 9).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        let mut ids: Vec<String> = a_train.iter().chain(&a_val).map(|r| r.source_id.clone()).collect();
        ids.sort();
        let mut want: Vec<String> = (0..50).map(|i| format!("r{i}")).collect();
        want.sort();
        assert_eq!(ids, want);
    }

    #[test]
    fn batch_counts() {
        let recs = records(715);
        assert_eq!(make_batches(&recs, &BatchPlan::sequential(715)).unwrap().len(), 1);
        let b = make_batches(&recs, &BatchPlan::sequential(100)).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b[7].labels.len(), 15);
        let one = make_batches(&recs[..1], &BatchPlan::sequential(1)).unwrap();
        assert_eq!(one[0].images.shape(), &[1, 2, 2, 1]);
        assert!(make_batches(&recs, &BatchPlan::sequential(0)).is_err());
        assert!(make_batches(&[], &BatchPlan::sequential(1)).is_err());
    }

    #[test]
    fn unshuffled_batches_preserve_order() {
        let recs = records(23);
        let batches = make_batches(&recs, &BatchPlan::sequential(5)).unwrap();
        let flat: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        assert_eq!(flat, (0..23).collect::<Vec<_>>());
        let pixels: Vec<f32> = batches.iter().flat_map(|b| b.images.data().to_vec()).collect();
        let want: Vec<f32> = recs.iter().flat_map(|r| r.pixels.data().to_vec()).collect();
        assert_eq!(pixels, want);
    }
}
