use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseGrads<T = f32> {
    pub grad_input: Tensor<T>,
    pub grad_weights: Tensor<T>,
    pub grad_bias: Vec<T>,
}

fn check<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (n, f) = input.dims2()?;
    let (wf, u) = weights.dims2()?;
    if f != wf {
        return Err(Error::shape(format!(
            "input has {f} features but weights expect {wf}"
        )));
    }
    Ok((n, f, u))
}

/// `input (N, F) · weights (F, U) + bias (U)`.
pub fn dense_affine<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>> {
    let (n, f, u) = check(input, weights)?;
    if bias.len() != u {
        return Err(Error::shape(format!("bias length {} != {u} units", bias.len())));
    }
    let x = input.data();
    let wd = weights.data();
    let mut out = Vec::with_capacity(n * u);
    for row in x.chunks_exact(f) {
        let mut acc = bias.to_vec();
        for (k, &xv) in row.iter().enumerate() {
            for (a, &wv) in acc.iter_mut().zip(&wd[k * u..][..u]) {
                *a += xv * wv;
            }
        }
        out.extend(acc);
    }
    Tensor::new(vec![n, u], out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, f, u) = check(input, weights)?;
    if grad_out.shape() != [n, u] {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match ({n}, {u})",
            grad_out.shape()
        )));
    }
    let x = input.data();
    let wd = weights.data();
    let go = grad_out.data();
    let mut gx = vec![T::zero(); n * f];
    let mut gw = vec![T::zero(); f * u];
    let mut gb = vec![T::zero(); u];
    for b in 0..n {
        let g = &go[b * u..][..u];
        for (acc, &d) in gb.iter_mut().zip(g) {
            *acc += d;
        }
        for k in 0..f {
            let xv = x[b * f + k];
            let wrow = &wd[k * u..][..u];
            let gwrow = &mut gw[k * u..][..u];
            let mut s = T::zero();
            for o in 0..u {
                gwrow[o] += xv * g[o];
                s += wrow[o] * g[o];
            }
            gx[b * f + k] = s;
        }
    }
    Ok(DenseGrads {
        grad_input: Tensor::new(vec![n, f], gx)?,
        grad_weights: Tensor::new(vec![f, u], gw)?,
        grad_bias: gb,
    })
}
