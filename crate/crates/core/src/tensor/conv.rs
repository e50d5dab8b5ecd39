use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    /// Zero fill; odd totals put the extra row/column on the bottom/right.
    Same,
}

/// Convolution weights with kernels laid out as `(kH, kW, Cin, Cout)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub kernels: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: Padding,
}

impl<T: Scalar> ConvParams<T> {
    pub fn kernel_dims(&self) -> Result<(usize, usize, usize, usize)> {
        self.kernels.dims4()
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub grad_input: Tensor<T>,
    pub grad_kernels: Tensor<T>,
    pub grad_bias: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn resolve<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Self> {
        let (n, h, w, cin) = input.dims4()?;
        let (kh, kw, kcin, cout) = params.kernel_dims()?;
        if params.stride < 1 {
            return Err(Error::invalid("convolution stride must be at least 1"));
        }
        if kcin != cin {
            return Err(Error::shape(format!(
                "input has {cin} channels but kernels expect {kcin}"
            )));
        }
        if params.bias.len() != cout {
            return Err(Error::shape(format!(
                "bias length {} does not match {cout} output channels",
                params.bias.len()
            )));
        }
        let stride = params.stride;
        let (out_h, out_w, pad_top, pad_left) = match params.padding {
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::shape(format!(
                        "input {h}x{w} smaller than kernel {kh}x{kw} under valid padding"
                    )));
                }
                ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
            }
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::shape(format!(
                        "same padding needs odd kernel dims, got {kh}x{kw}"
                    )));
                }
                let out_h = h.div_ceil(stride);
                let out_w = w.div_ceil(stride);
                let pad_h = ((out_h - 1) * stride + kh).saturating_sub(h);
                let pad_w = ((out_w - 1) * stride + kw).saturating_sub(w);
                (out_h, out_w, pad_h / 2, pad_w / 2)
            }
        };
        Ok(Self {
            n,
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    /// Source coordinate for an output index and kernel tap, if in bounds.
    #[inline]
    fn src(out: usize, tap: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (out * stride + tap).checked_sub(pad)?;
        (pos < extent).then_some(pos)
    }
}

/// Direct 2-d convolution over an NHWC batch.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let g = Geometry::resolve(input, params)?;
    let in_image = g.h * g.w * g.cin;
    let out_image = g.out_h * g.out_w * g.cout;
    let mut out = vec![T::zero(); g.n * out_image];
    let kernels = params.kernels.data();
    let bias = &params.bias;

    out.par_chunks_mut(out_image)
        .zip(input.data().par_chunks(in_image))
        .for_each(|(out_img, in_img)| {
            for oi in 0..g.out_h {
                for oj in 0..g.out_w {
                    let px = &mut out_img[(oi * g.out_w + oj) * g.cout..][..g.cout];
                    px.copy_from_slice(bias);
                    for di in 0..g.kh {
                        let Some(ii) = Geometry::src(oi, di, g.stride, g.pad_top, g.h) else {
                            continue;
                        };
                        for dj in 0..g.kw {
                            let Some(jj) = Geometry::src(oj, dj, g.stride, g.pad_left, g.w)
                            else {
                                continue;
                            };
                            let src = &in_img[(ii * g.w + jj) * g.cin..][..g.cin];
                            let tap = &kernels[(di * g.kw + dj) * g.cin * g.cout..];
                            for (c, &x) in src.iter().enumerate() {
                                let row = &tap[c * g.cout..][..g.cout];
                                for (acc, &k) in px.iter_mut().zip(row) {
                                    *acc += x * k;
                                }
                            }
                        }
                    }
                }
            }
        });

    Tensor::new(vec![g.n, g.out_h, g.out_w, g.cout], out)
}

/// Gradients of `sum(grad_out * conv2d_forward(input, params))`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = Geometry::resolve(input, params)?;
    let expected = [g.n, g.out_h, g.out_w, g.cout];
    if grad_out.shape() != expected {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match forward output {:?}",
            grad_out.shape(),
            expected
        )));
    }
    let in_image = g.h * g.w * g.cin;
    let out_image = g.out_h * g.out_w * g.cout;
    let kernels = params.kernels.data();
    let klen = kernels.len();

    // Per-image partials, reduced below in image order.
    let partials: Vec<(Vec<T>, Vec<T>, Vec<T>)> = input
        .data()
        .par_chunks(in_image)
        .zip(grad_out.data().par_chunks(out_image))
        .map(|(in_img, go_img)| {
            let mut gin = vec![T::zero(); in_image];
            let mut gk = vec![T::zero(); klen];
            let mut gb = vec![T::zero(); g.cout];
            for oi in 0..g.out_h {
                for oj in 0..g.out_w {
                    let go = &go_img[(oi * g.out_w + oj) * g.cout..][..g.cout];
                    for (b, &d) in gb.iter_mut().zip(go) {
                        *b += d;
                    }
                    for di in 0..g.kh {
                        let Some(ii) = Geometry::src(oi, di, g.stride, g.pad_top, g.h) else {
                            continue;
                        };
                        for dj in 0..g.kw {
                            let Some(jj) = Geometry::src(oj, dj, g.stride, g.pad_left, g.w)
                            else {
                                continue;
                            };
                            let base = (ii * g.w + jj) * g.cin;
                            let tap_off = (di * g.kw + dj) * g.cin * g.cout;
                            for c in 0..g.cin {
                                let x = in_img[base + c];
                                let row = tap_off + c * g.cout;
                                let krow = &kernels[row..][..g.cout];
                                let gkrow = &mut gk[row..][..g.cout];
                                let mut acc = T::zero();
                                for o in 0..g.cout {
                                    gkrow[o] += x * go[o];
                                    acc += krow[o] * go[o];
                                }
                                gin[base + c] += acc;
                            }
                        }
                    }
                }
            }
            (gin, gk, gb)
        })
        .collect();

    let mut grad_input = Vec::with_capacity(g.n * in_image);
    let mut grad_kernels = vec![T::zero(); klen];
    let mut grad_bias = vec![T::zero(); g.cout];
    for (gin, gk, gb) in partials {
        grad_input.extend_from_slice(&gin);
        for (a, b) in grad_kernels.iter_mut().zip(&gk) {
            *a += *b;
        }
        for (a, b) in grad_bias.iter_mut().zip(&gb) {
            *a += *b;
        }
    }

    Ok(ConvGrads {
        grad_input: Tensor::new(input.shape().to_vec(), grad_input)?,
        grad_kernels: Tensor::new(params.kernels.shape().to_vec(), grad_kernels)?,
        grad_bias,
    })
}
