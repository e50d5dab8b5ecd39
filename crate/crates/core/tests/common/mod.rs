#![allow(dead_code)]

use castnet::model::{Model, ModelSpec};
use castnet::tensor::{finite_difference_check, Padding, Tensor};
use castnet::train::{bce_loss, loss_and_gradients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A 16x16 CastNet-Tiny in f64 with two random images labeled 1 and 0.
pub fn toy_case(seed: u64) -> (Model<f64>, Tensor<f64>, Vec<f64>) {
    let spec = ModelSpec::new("toy", (16, 16, 1), ModelSpec::castnet_tiny_layers()).unwrap();
    let model = Model::<f64>::init(spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let images = Tensor::from_fn(vec![2, 16, 16, 1], |_| rng.random_range(0.0..1.0)).unwrap();
    (model, images, vec![1.0, 0.0])
}

/// Largest relative error between backpropagated and central-difference
/// gradients over every trainable parameter of the toy model.
pub fn whole_model_gradient_error(seed: u64, step: f64) -> f64 {
    let (model, images, labels) = toy_case(seed);
    let (_, grads) = loss_and_gradients(&model, &images, &labels).unwrap();
    let analytic: Vec<f64> = grads.concat();
    let point = model.params.trainable_flat();
    let mut probe = model.clone();
    finite_difference_check(
        |w| {
            probe.params.set_trainable_flat(w).unwrap();
            let fwd = probe.forward_train(&images).unwrap();
            bce_loss(&fwd.probs, &labels).unwrap()
        },
        &point,
        &analytic,
        step,
    )
}

/// Direct nested-loop convolution over NHWC input with `(kH, kW, Cin, Cout)`
/// kernels. Same padding splits the total as floor above/left and the rest
/// below/right.
pub fn naive_conv(
    input: &Tensor<f64>,
    kernels: &Tensor<f64>,
    bias: &[f64],
    stride: usize,
    padding: Padding,
) -> Tensor<f64> {
    let s = input.shape();
    let (n, h, w, cin) = (s[0], s[1], s[2], s[3]);
    let k = kernels.shape();
    let (kh, kw, cout) = (k[0], k[1], k[3]);
    let (oh, ow, pt, pl) = match padding {
        Padding::Valid => ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0),
        Padding::Same => {
            let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
            let ph = ((oh - 1) * stride + kh).saturating_sub(h);
            let pw = ((ow - 1) * stride + kw).saturating_sub(w);
            (oh, ow, ph / 2, pw / 2)
        }
    };
    let mut out = vec![0.0; n * oh * ow * cout];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = bias[co];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = (oy * stride + dy) as isize - pt as isize;
                            let ix = (ox * stride + dx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += input.at4(b, iy as usize, ix as usize, ci)
                                    * kernels.data()[((dy * kw + dx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, oh, ow, cout], out).unwrap()
}

/// Direct nested-loop max pooling without padding.
pub fn naive_maxpool(input: &Tensor<f64>, window: usize, stride: usize) -> Tensor<f64> {
    let s = input.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut out = vec![f64::NEG_INFINITY; n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let o = &mut out[((b * oh + oy) * ow + ox) * c + ch];
                    for dy in 0..window {
                        for dx in 0..window {
                            *o = o.max(input.at4(b, oy * stride + dy, ox * stride + dx, ch));
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, oh, ow, c], out).unwrap()
}

/// Sample covariance (n - 1 denominator) of row vectors.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    cov
}
