use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Variance floor added before the square root.
pub const BN_EPSILON: f64 = 1e-3;

/// Values kept from a training-mode batch-norm pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T = f32> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Biased (population) variance of the batch.
    pub batch_var: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T = f32> {
    pub grad_input: Tensor<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
}

fn channels<T: Scalar>(input: &Tensor<T>, gamma: &[T], beta: &[T]) -> Result<usize> {
    let c = *input.shape().last().expect("non-empty shape");
    if gamma.len() != c || beta.len() != c {
        return Err(Error::shape(format!(
            "batch norm over {c} channels given gamma/beta of length {}/{}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(c)
}

/// Normalizes with per-channel statistics of the batch itself.
pub fn batch_norm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let c = channels(input, gamma, beta)?;
    let m = input.len() / c;
    let count = T::from_usize_lossy(m);
    let eps = T::from_f64_lossy(BN_EPSILON);

    let mut mean = vec![T::zero(); c];
    for px in input.data().chunks_exact(c) {
        for (s, &v) in mean.iter_mut().zip(px) {
            *s += v;
        }
    }
    mean.iter_mut().for_each(|s| *s = *s / count);

    let mut var = vec![T::zero(); c];
    for px in input.data().chunks_exact(c) {
        for ((s, &v), &mu) in var.iter_mut().zip(px).zip(&mean) {
            *s += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|s| *s = *s / count);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut xhat = Vec::with_capacity(input.len());
    let mut out = Vec::with_capacity(input.len());
    for px in input.data().chunks_exact(c) {
        for ch in 0..c {
            let xh = (px[ch] - mean[ch]) * inv_std[ch];
            xhat.push(xh);
            out.push(gamma[ch] * xh + beta[ch]);
        }
    }
    let shape = input.shape().to_vec();
    Ok((
        Tensor::new(shape.clone(), out)?,
        BatchNormCache {
            xhat: Tensor::new(shape, xhat)?,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

/// Normalizes with frozen moving statistics.
pub fn batch_norm_inference<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    moving_mean: &[T],
    moving_var: &[T],
) -> Result<Tensor<T>> {
    let c = channels(input, gamma, beta)?;
    if moving_mean.len() != c || moving_var.len() != c {
        return Err(Error::shape("moving statistics length differs from channel count"));
    }
    let eps = T::from_f64_lossy(BN_EPSILON);
    let scale: Vec<T> = (0..c)
        .map(|ch| gamma[ch] / (moving_var[ch] + eps).sqrt())
        .collect();
    let mut out = input.data().to_vec();
    for px in out.chunks_exact_mut(c) {
        for ch in 0..c {
            px[ch] = (px[ch] - moving_mean[ch]) * scale[ch] + beta[ch];
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

pub fn batch_norm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::shape("batch norm grad_out shape differs from forward"));
    }
    let c = gamma.len();
    let m = T::from_usize_lossy(grad_out.len() / c);
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for (g, xh) in grad_out
        .data()
        .chunks_exact(c)
        .zip(cache.xhat.data().chunks_exact(c))
    {
        for ch in 0..c {
            grad_beta[ch] += g[ch];
            grad_gamma[ch] += g[ch] * xh[ch];
        }
    }
    // dx = inv_std / m * (m * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat)), dxhat = g * gamma
    let mut gi = Vec::with_capacity(grad_out.len());
    for (g, xh) in grad_out
        .data()
        .chunks_exact(c)
        .zip(cache.xhat.data().chunks_exact(c))
    {
        for ch in 0..c {
            let dxhat = g[ch] * gamma[ch];
            let sum_dxhat = grad_beta[ch] * gamma[ch];
            let sum_dxhat_xhat = grad_gamma[ch] * gamma[ch];
            gi.push(cache.inv_std[ch] / m * (m * dxhat - sum_dxhat - xh[ch] * sum_dxhat_xhat));
        }
    }
    Ok(BatchNormGrads {
        grad_input: Tensor::new(grad_out.shape().to_vec(), gi)?,
        grad_gamma,
        grad_beta,
    })
}
