use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::DynamicImage;
use rayon::prelude::*;

use super::{rescale, to_grayscale, ImageRecord, Label};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Class directories in load order, with their labels.
pub const CLASS_DIRS: [(&str, Label); 2] = [("ok_front", Label::Ok), ("def_front", Label::Defective)];

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub train: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
}

/// Loads `root/{train,test}/{ok_front,def_front}/*.{png,jpg,jpeg}` at the
/// files' native size.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<RawDataset> {
    load_dataset_resized(root, None)
}

/// Like [`load_dataset`], resizing every image to `size x size` first when
/// `size` is given.
pub fn load_dataset_resized(root: impl AsRef<Path>, size: Option<usize>) -> Result<RawDataset> {
    let root = root.as_ref();
    let train_dir = root.join("train");
    let test_dir = root.join("test");
    for dir in [&train_dir, &test_dir] {
        if !dir.is_dir() {
            return Err(Error::data(dir, "dataset directory is missing"));
        }
    }
    Ok(RawDataset {
        train: load_split(&train_dir, size)?,
        test: load_split(&test_dir, size)?,
    })
}

fn load_split(dir: &Path, size: Option<usize>) -> Result<Vec<ImageRecord>> {
    let mut files: Vec<(PathBuf, Label)> = Vec::new();
    for (name, label) in CLASS_DIRS {
        let class_dir = dir.join(name);
        if !class_dir.is_dir() {
            return Err(Error::data(&class_dir, "class directory is missing"));
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&class_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                    .unwrap_or(false)
            })
            .collect();
        if paths.is_empty() {
            log::warn!("class directory {} holds no images", class_dir.display());
        }
        paths.sort();
        files.extend(paths.into_iter().map(|p| (p, label)));
    }
    // par_iter + collect keeps the sequential order.
    files
        .par_iter()
        .map(|(path, label)| {
            let pixels = read_gray(path, size)?;
            ImageRecord::new(pixels, *label, path.display().to_string())
        })
        .collect()
}

fn read_gray(path: &Path, size: Option<usize>) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::data(path, e.to_string()))?;
    let img = match size {
        Some(s) => {
            let s = u32::try_from(s).map_err(|_| Error::invalid("image size too large"))?;
            img.resize_exact(s, s, FilterType::Triangle)
        }
        None => img,
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = match img {
        DynamicImage::ImageLuma8(g) => {
            Tensor::new(vec![h, w, 1], g.into_raw().into_iter().map(f32::from).collect())?
        }
        other => {
            let rgb = other.to_rgb8();
            let t = Tensor::new(vec![h, w, 3], rgb.into_raw().into_iter().map(f32::from).collect())?;
            to_grayscale(&t)?
        }
    };
    // Luma of 8-bit inputs can overshoot 255 by float rounding.
    let clamped = gray.data().iter().map(|v| v.clamp(0.0, 255.0)).collect();
    rescale(&Tensor::new(gray.shape().to_vec(), clamped)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_layout(root: &Path, per_class: usize) {
        for split in ["train", "test"] {
            for (name, _) in CLASS_DIRS {
                let dir = root.join(split).join(name);
                fs::create_dir_all(&dir).unwrap();
                for i in 0..per_class {
                    let img = RgbImage::from_pixel(8, 6, Rgb([i as u8 * 20, 100, 200]));
                    img.save(dir.join(format!("img_{i:03}.png"))).unwrap();
                }
            }
        }
    }

    #[test]
    fn loads_and_labels_by_directory() {
        let tmp = tempfile::tempdir().unwrap();
        write_layout(tmp.path(), 10);
        let ds = load_dataset(tmp.path()).unwrap();
        assert_eq!(ds.train.len(), 20);
        assert_eq!(ds.test.len(), 20);
        let positives: f32 = ds.train.iter().map(|r| r.label.as_f32()).sum();
        assert_eq!(positives, 10.0);
        assert_eq!(ds.train[0].pixels.shape(), &[6, 8, 1]);
        // ok_front first, lexicographic within a class
        assert!(ds.train[0].source_id.ends_with("ok_front/img_000.png"));
        assert!(ds.train[10].source_id.ends_with("def_front/img_000.png"));
    }

    #[test]
    fn resizes_on_request() {
        let tmp = tempfile::tempdir().unwrap();
        write_layout(tmp.path(), 1);
        let ds = load_dataset_resized(tmp.path(), Some(4)).unwrap();
        assert_eq!(ds.test[0].pixels.shape(), &[4, 4, 1]);
    }

    #[test]
    fn missing_test_dir_is_fatal() {
        let tmp = tempfile::tempdir().unwrap();
        write_layout(tmp.path(), 1);
        fs::remove_dir_all(tmp.path().join("test")).unwrap();
        let err = load_dataset(tmp.path()).unwrap_err();
        assert!(matches!(&err, Error::Data { path, .. } if path.ends_with("test")), "{err}");
    }

    #[test]
    fn unreadable_file_names_the_path() {
        let tmp = tempfile::tempdir().unwrap();
        write_layout(tmp.path(), 1);
        let bad = tmp.path().join("train/ok_front/broken.png");
        fs::write(&bad, b"not a png").unwrap();
        match load_dataset(tmp.path()).unwrap_err() {
            Error::Data { path, .. } => assert_eq!(path, bad),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn empty_class_is_not_fatal() {
        let tmp = tempfile::tempdir().unwrap();
        write_layout(tmp.path(), 2);
        for f in fs::read_dir(tmp.path().join("test/def_front")).unwrap() {
            fs::remove_file(f.unwrap().path()).unwrap();
        }
        let ds = load_dataset(tmp.path()).unwrap();
        assert_eq!(ds.test.len(), 2);
    }
}
