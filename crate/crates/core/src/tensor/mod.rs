//! Dense NHWC tensors and the layer kernels built on them.
//!
//! Every kernel is a pure function of its inputs. Kernels that split work
//! across images reduce per-image partial results in image order, so the
//! output does not depend on the number of worker threads.

mod activation;
mod conv;
mod dense;
mod gradcheck;
mod norm;
mod pool;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub use activation::{activation, activation_backward, sigmoid_scalar, Activation};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams, Padding};
pub use dense::{dense_affine, dense_backward, DenseGrads};
pub use gradcheck::{finite_difference_check, numeric_gradient, GRADCHECK_FLOOR};
pub use norm::{
    batch_norm_backward, batch_norm_inference, batch_norm_train, BatchNormCache, BatchNormGrads,
    BN_EPSILON,
};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2d, maxpool2d_backward, PoolIndex,
};

/// Element type accepted by the kernels.
///
/// `f32` is the working precision; `f64` exists for gradient checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + Sum + AddAssign + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense row-major tensor.
///
/// Image tensors are `(N, H, W, C)`; the flat index of `(n, h, w, c)` is
/// `((n * H + h) * W + w) * C + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} holds {} elements but {} were supplied",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![value; len],
        })
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> T) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            data: (0..len).map(f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Element-type conversion, e.g. into `f64` for gradient checks.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    /// Splits a 4-d tensor shape into `(n, h, w, c)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, h, w, c] => Ok((n, h, w, c)),
            _ => Err(Error::shape(format!(
                "expected a 4-d NHWC tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Splits a 2-d tensor shape into `(rows, cols)`.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::shape(format!(
                "expected a 2-d tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn at4(&self, n: usize, h: usize, w: usize, c: usize) -> T {
        let (_, hh, ww, cc) = self.dims4().expect("4-d tensor");
        self.data[((n * hh + h) * ww + w) * cc + c]
    }

    /// Copies image `n` of a batch into a `(1, H, W, C)` tensor.
    pub fn image(&self, n: usize) -> Result<Tensor<T>> {
        let (batch, h, w, c) = self.dims4()?;
        if n >= batch {
            return Err(Error::shape(format!("image {n} out of range for batch {batch}")));
        }
        let size = h * w * c;
        Tensor::new(vec![1, h, w, c], self.data[n * size..(n + 1) * size].to_vec())
    }

    /// Stacks same-shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape(format!(
                    "cannot stack shapes {:?} and {:?}",
                    first.shape, t.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Tensor::new(shape, data)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::shape(format!(
            "every dimension must be at least 1, got {shape:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn row_major_nhwc_indexing() {
        let t = Tensor::<f32>::from_fn(vec![2, 3, 4, 5], |i| i as f32).unwrap();
        assert_eq!(t.at4(1, 2, 3, 4), (((3 + 2) * 4 + 3) * 5 + 4) as f32);
        assert_eq!(t.at4(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn stack_and_image_round_trip() {
        let a = Tensor::<f32>::full(vec![2, 2, 1], 1.0).unwrap();
        let b = Tensor::<f32>::full(vec![2, 2, 1], 2.0).unwrap();
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2, 1]);
        assert_eq!(s.image(1).unwrap().data(), b.data());
    }
}
