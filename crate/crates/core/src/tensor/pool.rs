use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Source positions selected by a max-pool forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndex {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    /// Flat input index for every output element.
    argmax: Vec<usize>,
}

impl PoolIndex {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Max pooling without padding. Ties go to the first element in row-major
/// window order.
pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, PoolIndex)> {
    let (n, h, w, c) = input.dims4()?;
    if window < 1 || stride < 1 {
        return Err(Error::invalid("pool window and stride must be at least 1"));
    }
    if window > h || window > w {
        return Err(Error::shape(format!(
            "pool window {window} exceeds spatial extent {h}x{w}"
        )));
    }
    let out_h = (h - window) / stride + 1;
    let out_w = (w - window) / stride + 1;
    let data = input.data();
    let mut out = Vec::with_capacity(n * out_h * out_w * c);
    let mut argmax = Vec::with_capacity(out.capacity());

    for b in 0..n {
        for oi in 0..out_h {
            for oj in 0..out_w {
                for ch in 0..c {
                    let mut best_idx = ((b * h + oi * stride) * w + oj * stride) * c + ch;
                    let mut best = data[best_idx];
                    for di in 0..window {
                        for dj in 0..window {
                            let idx = ((b * h + oi * stride + di) * w + oj * stride + dj) * c + ch;
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }

    let output_shape = vec![n, out_h, out_w, c];
    Ok((
        Tensor::new(output_shape.clone(), out)?,
        PoolIndex {
            input_shape: input.shape().to_vec(),
            output_shape,
            argmax,
        },
    ))
}

/// Routes each output gradient to the input element that won the forward max.
pub fn maxpool2d_backward<T: Scalar>(index: &PoolIndex, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != index.output_shape {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match pooled shape {:?}",
            grad_out.shape(),
            index.output_shape
        )));
    }
    let mut grad_in = Tensor::zeros(index.input_shape.clone())?;
    let gi = grad_in.data_mut();
    for (&src, &g) in index.argmax.iter().zip(grad_out.data()) {
        gi[src] += g;
    }
    Ok(grad_in)
}

/// Per-channel spatial mean: `(N, H, W, C) -> (N, C)`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w, c) = input.dims4()?;
    let area = (h * w) as f64;
    let data = input.data();
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        let img = &data[b * h * w * c..][..h * w * c];
        let mut sums = vec![0.0f64; c];
        for px in img.chunks_exact(c) {
            for (s, v) in sums.iter_mut().zip(px) {
                *s += v.to_f64().unwrap_or(f64::NAN);
            }
        }
        out.extend(sums.into_iter().map(|s| T::from_f64_lossy(s / area)));
    }
    Tensor::new(vec![n, c], out)
}

/// Spreads each `(n, c)` gradient evenly over the `H * W` cells it averaged.
pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, h, w, c] = input_shape[..] else {
        return Err(Error::shape(format!("expected NHWC input shape, got {input_shape:?}")));
    };
    if grad_out.shape() != [n, c] {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match ({n}, {c})",
            grad_out.shape()
        )));
    }
    let scale = T::one() / T::from_usize_lossy(h * w);
    let go = grad_out.data();
    Tensor::from_fn(input_shape.to_vec(), |i| {
        let b = i / (h * w * c);
        let ch = i % c;
        go[b * c + ch] * scale
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f32>) -> Tensor<f32> {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn picks_window_maxima() {
        let (out, _) = maxpool2d(&t(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);

        let ramp = t(&[1, 4, 4, 1], (1..=16).map(|v| v as f32).collect());
        let (out, _) = maxpool2d(&ramp, 2, 2).unwrap();
        assert_eq!(out.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn constant_input_pools_to_constant() {
        let (out, _) = maxpool2d(&Tensor::full(vec![2, 6, 6, 3], 0.7f32).unwrap(), 2, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn rejects_window_larger_than_input() {
        assert!(maxpool2d(&Tensor::<f32>::zeros(vec![1, 2, 2, 1]).unwrap(), 3, 1).is_err());
    }

    #[test]
    fn backward_routes_to_argmax() {
        let (_, idx) = maxpool2d(&t(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap();
        let gi = maxpool2d_backward(&idx, &t(&[1, 1, 1, 1], vec![2.5])).unwrap();
        assert_eq!(gi.data(), &[0.0, 0.0, 0.0, 2.5]);

        let gi = maxpool2d_backward(&idx, &t(&[1, 1, 1, 1], vec![0.0])).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ties_route_to_first_element() {
        let (_, idx) = maxpool2d(&Tensor::full(vec![1, 2, 2, 1], 3.0f32).unwrap(), 2, 2).unwrap();
        let gi = maxpool2d_backward(&idx, &t(&[1, 1, 1, 1], vec![1.0])).unwrap();
        assert_eq!(gi.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_mismatched_index() {
        let (_, idx) = maxpool2d(&Tensor::<f32>::zeros(vec![1, 4, 4, 1]).unwrap(), 2, 2).unwrap();
        assert!(maxpool2d_backward(&idx, &Tensor::<f32>::zeros(vec![1, 1, 1, 1]).unwrap()).is_err());
    }

    #[test]
    fn gap_means() {
        let out = global_avg_pool(&t(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[2.5]);
        let c = global_avg_pool(&Tensor::full(vec![2, 5, 3, 2], 0.3f32).unwrap()).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.3));
        let one = t(&[1, 1, 1, 3], vec![1.0, -2.0, 3.0]);
        assert_eq!(global_avg_pool(&one).unwrap().data(), one.data());
    }

    #[test]
    fn gap_backward_is_uniform() {
        let g = global_avg_pool_backward(&[1, 2, 2, 2], &t(&[1, 2], vec![4.0, 8.0])).unwrap();
        assert_eq!(g.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }
}
