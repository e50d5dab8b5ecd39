//! ZCA whitening fitted on a set of training images.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest supported flattened image size (96x96 grayscale).
pub const ZCA_MAX_DIM: usize = 96 * 96;

const MAGIC: &[u8; 6] = b"CZCA1\0";

/// `whitened = W (x - mean)` with `W = U diag(1/sqrt(lambda + eps)) U^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform {
    pub shape: Vec<usize>,
    pub mean: DVector<f64>,
    pub whitening: DMatrix<f64>,
    pub epsilon: f64,
}

impl ZcaTransform {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * (self.dim() + self.dim() * self.dim()));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &s in &self.shape {
            buf.extend_from_slice(&(s as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.epsilon.to_le_bytes());
        for v in self.mean.iter().chain(self.whitening.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::data(path, e.to_string()))?;
        let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
        if buf.len() < MAGIC.len() + 4 + 8 + 4 || &buf[..MAGIC.len()] != MAGIC {
            return Err(bad("not a ZCA transform file"));
        }
        let (body, trailer) = buf.split_at(buf.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(bad("checksum mismatch"));
        }
        let mut pos = MAGIC.len();
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = body.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let d: usize = shape.iter().product();
        if d == 0 || d > ZCA_MAX_DIM {
            return Err(bad("invalid dimension"));
        }
        let epsilon = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut read = |n: usize| -> Result<Vec<f64>> {
            let raw = take(8 * n)?;
            Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let mean = DVector::from_vec(read(d)?);
        let whitening = DMatrix::from_vec(d, d, read(d * d)?);
        if pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            shape,
            mean,
            whitening,
            epsilon,
        })
    }
}

/// Fits on images of identical shape. Needs at least two images.
pub fn zca_fit(images: &[&Tensor], epsilon: f64) -> Result<ZcaTransform> {
    if images.len() < 2 {
        return Err(Error::invalid("ZCA needs at least 2 images"));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid("ZCA epsilon must be >= 0"));
    }
    let shape = images[0].shape().to_vec();
    if images.iter().any(|t| t.shape() != shape.as_slice()) {
        return Err(Error::shape("ZCA images must share one shape"));
    }
    let d = images[0].len();
    if d > ZCA_MAX_DIM {
        return Err(Error::invalid(format!(
            "ZCA supports at most {ZCA_MAX_DIM} pixels per image, got {d}"
        )));
    }
    let n = images.len();
    let x = DMatrix::from_fn(n, d, |r, c| images[r].data()[c] as f64);
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("ZCA eigendecomposition did not converge".into()))?;
    let mut scale = DVector::zeros(d);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = lambda.max(0.0) + epsilon;
        if v <= 0.0 {
            return Err(Error::Numeric(
                "ZCA covariance is singular; use a positive epsilon".into(),
            ));
        }
        scale[i] = 1.0 / v.sqrt();
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= scale[j];
    }
    let w = &scaled * u.transpose();
    let whitening = (&w + w.transpose()) * 0.5;
    Ok(ZcaTransform {
        shape,
        mean,
        whitening,
        epsilon,
    })
}

/// Centers and whitens one image. Output values are not clipped.
pub fn zca_apply(t: &ZcaTransform, image: &Tensor) -> Result<Tensor> {
    if image.len() != t.dim() {
        return Err(Error::shape(format!(
            "ZCA fitted for {} values, image has {}",
            t.dim(),
            image.len()
        )));
    }
    let x = DVector::from_iterator(
        t.dim(),
        image.data().iter().zip(t.mean.iter()).map(|(&v, m)| v as f64 - m),
    );
    let y = &t.whitening * x;
    Tensor::new(image.shape().to_vec(), y.iter().map(|&v| v as f32).collect())
}
