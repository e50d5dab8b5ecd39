//! Layer description, inference and parameter accounting for the
//! channel-pruned CastNet-Tiny classifier.

mod format;
mod reference;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    activation, activation_backward, batch_norm_backward, batch_norm_inference, batch_norm_train,
    conv2d_backward, conv2d_forward, dense_affine, dense_backward, global_avg_pool,
    global_avg_pool_backward, maxpool2d, maxpool2d_backward, Activation, BatchNormCache,
    ConvParams, Padding, PoolIndex, Scalar, Tensor,
};

pub use format::{decode_model, encode_model, load_model, save_model, HEADER_LEN, MAGIC, VERSION};
pub use reference::{lookup_reference, reference_stats, ReferenceModelStats};

/// Moving-average momentum for batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: Padding,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Gap,
    Dense {
        inputs: usize,
        units: usize,
    },
    Sigmoid,
}

impl LayerSpec {
    fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv {
            kernel: 3,
            in_channels,
            out_channels,
            stride: 1,
            padding: Padding::Same,
        }
    }

    /// `(trainable, non_trainable)` parameter counts.
    pub fn param_counts(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv {
                kernel,
                in_channels,
                out_channels,
                ..
            } => (kernel * kernel * in_channels * out_channels + out_channels, 0),
            LayerSpec::BatchNorm { channels } => (2 * channels, 2 * channels),
            LayerSpec::Dense { inputs, units } => (inputs * units + units, 0),
            LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Gap | LayerSpec::Sigmoid => {
                (0, 0)
            }
        }
    }

    /// Output shape (without the batch axis) for a given input shape.
    fn propagate(&self, shape: &[usize]) -> Result<Vec<usize>> {
        let spatial = |s: &[usize]| -> Result<(usize, usize, usize)> {
            match *s {
                [h, w, c] => Ok((h, w, c)),
                _ => Err(Error::shape(format!("{self:?} needs an (H, W, C) input, got {s:?}"))),
            }
        };
        match *self {
            LayerSpec::Conv {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
            } => {
                let (h, w, c) = spatial(shape)?;
                if c != in_channels {
                    return Err(Error::shape(format!(
                        "conv expects {in_channels} channels, previous layer gives {c}"
                    )));
                }
                if stride < 1 || kernel < 1 || out_channels < 1 {
                    return Err(Error::shape("conv kernel, stride and channels must be >= 1"));
                }
                match padding {
                    Padding::Same => {
                        if kernel % 2 == 0 {
                            return Err(Error::shape("same padding needs an odd kernel"));
                        }
                        Ok(vec![h.div_ceil(stride), w.div_ceil(stride), out_channels])
                    }
                    Padding::Valid => {
                        if h < kernel || w < kernel {
                            return Err(Error::shape(format!(
                                "{h}x{w} input smaller than {kernel}x{kernel} kernel"
                            )));
                        }
                        Ok(vec![(h - kernel) / stride + 1, (w - kernel) / stride + 1, out_channels])
                    }
                }
            }
            LayerSpec::BatchNorm { channels } => {
                let (_, _, c) = spatial(shape)?;
                if c != channels {
                    return Err(Error::shape(format!(
                        "batch norm over {channels} channels, previous layer gives {c}"
                    )));
                }
                Ok(shape.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(shape.to_vec()),
            LayerSpec::MaxPool { window, stride } => {
                let (h, w, c) = spatial(shape)?;
                if window < 1 || stride < 1 || window > h || window > w {
                    return Err(Error::shape(format!(
                        "pool window {window} does not fit {h}x{w}"
                    )));
                }
                Ok(vec![(h - window) / stride + 1, (w - window) / stride + 1, c])
            }
            LayerSpec::Gap => {
                let (_, _, c) = spatial(shape)?;
                Ok(vec![c])
            }
            LayerSpec::Dense { inputs, units } => match *shape {
                [f] if f == inputs && units >= 1 => Ok(vec![units]),
                _ => Err(Error::shape(format!(
                    "dense expects ({inputs},) features, previous layer gives {shape:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub trainable: usize,
    pub non_trainable: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// `(H, W, C)`.
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Builds a spec after checking that consecutive layers fit together and
    /// that the network ends in a single sigmoid unit.
    pub fn new(
        name: impl Into<String>,
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            input_shape,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Conv3x3(1→16) BN ReLU Pool, Conv3x3(16→16) BN ReLU Pool,
    /// Conv3x3(16→8) ReLU Pool, GAP, Dense(8→1), Sigmoid.
    pub fn castnet_tiny_layers() -> Vec<LayerSpec> {
        let pool = LayerSpec::MaxPool {
            window: 2,
            stride: 2,
        };
        vec![
            LayerSpec::conv3x3(1, 16),
            LayerSpec::BatchNorm { channels: 16 },
            LayerSpec::Relu,
            pool,
            LayerSpec::conv3x3(16, 16),
            LayerSpec::BatchNorm { channels: 16 },
            LayerSpec::Relu,
            pool,
            LayerSpec::conv3x3(16, 8),
            LayerSpec::Relu,
            pool,
            LayerSpec::Gap,
            LayerSpec::Dense {
                inputs: 8,
                units: 1,
            },
            LayerSpec::Sigmoid,
        ]
    }

    /// The canonical grayscale CastNet-Tiny. Inputs must be at least 32x32.
    pub fn castnet_tiny(input_shape: (usize, usize, usize)) -> Result<Self> {
        let (h, w, c) = input_shape;
        if c != 1 {
            return Err(Error::shape(format!(
                "CastNet-Tiny takes grayscale input, got {c} channels"
            )));
        }
        if h < 32 || w < 32 {
            return Err(Error::shape(format!(
                "CastNet-Tiny needs at least 32x32 input, got {h}x{w}"
            )));
        }
        Self::new("castnet-tiny", input_shape, Self::castnet_tiny_layers())
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.activation_shapes()?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::shape("model has no layers"))?;
        if *last != LayerSpec::Sigmoid || shapes.last().map(Vec::as_slice) != Some(&[1][..]) {
            return Err(Error::shape(
                "model must end in a sigmoid over exactly one unit",
            ));
        }
        Ok(())
    }

    /// Per-layer output shapes, batch axis omitted.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::shape("input dimensions must be at least 1"));
        }
        let mut shape = vec![h, w, c];
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer
                .propagate(&shape)
                .map_err(|e| Error::shape(format!("layer {i}: {e}")))?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    /// Output channel counts of the conv layers, in order.
    pub fn conv_channels(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv { out_channels, .. } => Some(*out_channels),
                _ => None,
            })
            .collect()
    }

    pub fn count_params(&self) -> ParamCount {
        let (trainable, non_trainable) = self
            .layers
            .iter()
            .map(LayerSpec::param_counts)
            .fold((0, 0), |(t, n), (a, b)| (t + a, n + b));
        ParamCount {
            trainable,
            non_trainable,
            total: trainable + non_trainable,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T = f32> {
    None,
    Conv {
        kernels: Tensor<T>,
        bias: Vec<T>,
    },
    BatchNorm {
        gamma: Vec<T>,
        beta: Vec<T>,
        moving_mean: Vec<T>,
        moving_var: Vec<T>,
    },
    Dense {
        weights: Tensor<T>,
        bias: Vec<T>,
    },
}

/// Parameters of every layer in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T = f32> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> ParamStore<T> {
    /// Trainable buffers in declaration order: conv kernels, conv bias,
    /// batch-norm gamma, beta, dense weights, dense bias.
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::None => {}
                LayerParams::Conv { kernels, bias } => {
                    out.push(kernels.data());
                    out.push(bias.as_slice());
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                LayerParams::Dense { weights, bias } => {
                    out.push(weights.data());
                    out.push(bias.as_slice());
                }
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::None => {}
                LayerParams::Conv { kernels, bias } => {
                    out.push(kernels.data_mut());
                    out.push(bias.as_mut_slice());
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                LayerParams::Dense { weights, bias } => {
                    out.push(weights.data_mut());
                    out.push(bias.as_mut_slice());
                }
            }
        }
        out
    }

    /// Every buffer, trainable or not, in serialization order.
    pub fn all(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::None => {}
                LayerParams::Conv { kernels, bias } => {
                    out.push(kernels.data());
                    out.push(bias.as_slice());
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    moving_mean,
                    moving_var,
                } => {
                    out.extend([
                        gamma.as_slice(),
                        beta.as_slice(),
                        moving_mean.as_slice(),
                        moving_var.as_slice(),
                    ]);
                }
                LayerParams::Dense { weights, bias } => {
                    out.push(weights.data());
                    out.push(bias.as_slice());
                }
            }
        }
        out
    }

    pub fn all_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::None => {}
                LayerParams::Conv { kernels, bias } => {
                    out.push(kernels.data_mut());
                    out.push(bias.as_mut_slice());
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    moving_mean,
                    moving_var,
                } => {
                    out.extend([
                        gamma.as_mut_slice(),
                        beta.as_mut_slice(),
                        moving_mean.as_mut_slice(),
                        moving_var.as_mut_slice(),
                    ]);
                }
                LayerParams::Dense { weights, bias } => {
                    out.push(weights.data_mut());
                    out.push(bias.as_mut_slice());
                }
            }
        }
        out
    }

    pub fn counts(&self) -> ParamCount {
        let trainable: usize = self.trainable().iter().map(|s| s.len()).sum();
        let total: usize = self.all().iter().map(|s| s.len()).sum();
        ParamCount {
            trainable,
            non_trainable: total - trainable,
            total,
        }
    }

    pub fn trainable_flat(&self) -> Vec<T> {
        self.trainable().concat()
    }

    pub fn set_trainable_flat(&mut self, flat: &[T]) -> Result<()> {
        let expected: usize = self.trainable().iter().map(|s| s.len()).sum();
        if flat.len() != expected {
            return Err(Error::shape(format!(
                "expected {expected} trainable values, got {}",
                flat.len()
            )));
        }
        let mut off = 0;
        for buf in self.trainable_mut() {
            buf.copy_from_slice(&flat[off..off + buf.len()]);
            off += buf.len();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let cv = |v: &[T]| -> Vec<U> {
            v.iter()
                .map(|x| U::from_f64_lossy(x.to_f64().unwrap_or(f64::NAN)))
                .collect()
        };
        ParamStore {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    LayerParams::None => LayerParams::None,
                    LayerParams::Conv { kernels, bias } => LayerParams::Conv {
                        kernels: kernels.cast(),
                        bias: cv(bias),
                    },
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        moving_mean,
                        moving_var,
                    } => LayerParams::BatchNorm {
                        gamma: cv(gamma),
                        beta: cv(beta),
                        moving_mean: cv(moving_mean),
                        moving_var: cv(moving_var),
                    },
                    LayerParams::Dense { weights, bias } => LayerParams::Dense {
                        weights: weights.cast(),
                        bias: cv(bias),
                    },
                })
                .collect(),
        }
    }
}

/// Per-layer values saved by a training-mode forward pass.
#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv { input: Tensor<T> },
    BatchNorm { cache: BatchNormCache<T> },
    Relu { input: Tensor<T>, output: Tensor<T> },
    MaxPool { index: PoolIndex },
    Gap { input_shape: Vec<usize> },
    Dense { input: Tensor<T> },
    Sigmoid,
}

/// Result of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct TrainForward<T = f32> {
    /// Pre-sigmoid outputs, one per image.
    pub logits: Vec<T>,
    pub probs: Vec<T>,
    caches: Vec<LayerCache<T>>,
}

impl<T: Scalar> TrainForward<T> {
    /// `(layer index, batch mean, batch variance)` of every batch-norm layer.
    pub fn batch_stats(&self) -> Vec<(usize, &[T], &[T])> {
        self.caches
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                LayerCache::BatchNorm { cache } => {
                    Some((i, cache.batch_mean.as_slice(), cache.batch_var.as_slice()))
                }
                _ => None,
            })
            .collect()
    }
}

/// A model spec with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub spec: ModelSpec,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// He-normal conv/dense weights, zero biases, `gamma = 1`, `beta = 0`,
    /// moving mean 0 and moving variance 1.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |fan_in: usize, len: usize| -> Vec<T> {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..len)
                .map(|_| T::from_f64_lossy(normal.sample(&mut rng)))
                .collect()
        };
        let layers = spec
            .layers
            .iter()
            .map(|l| -> Result<LayerParams<T>> {
                Ok(match *l {
                    LayerSpec::Conv {
                        kernel,
                        in_channels,
                        out_channels,
                        ..
                    } => LayerParams::Conv {
                        kernels: Tensor::new(
                            vec![kernel, kernel, in_channels, out_channels],
                            he(
                                kernel * kernel * in_channels,
                                kernel * kernel * in_channels * out_channels,
                            ),
                        )?,
                        bias: vec![T::zero(); out_channels],
                    },
                    LayerSpec::BatchNorm { channels } => LayerParams::BatchNorm {
                        gamma: vec![T::one(); channels],
                        beta: vec![T::zero(); channels],
                        moving_mean: vec![T::zero(); channels],
                        moving_var: vec![T::one(); channels],
                    },
                    LayerSpec::Dense { inputs, units } => LayerParams::Dense {
                        weights: Tensor::new(vec![inputs, units], he(inputs, inputs * units))?,
                        bias: vec![T::zero(); units],
                    },
                    _ => LayerParams::None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            params: ParamStore { layers },
        })
    }

    /// Every parameter zero except batch-norm `gamma` and moving variance,
    /// which are 1.
    pub fn zeroed(spec: ModelSpec) -> Result<Self> {
        let mut model = Self::init(spec, 0)?;
        for layer in &mut model.params.layers {
            match layer {
                LayerParams::Conv { kernels, bias } => {
                    kernels.data_mut().fill(T::zero());
                    bias.fill(T::zero());
                }
                LayerParams::Dense { weights, bias } => {
                    weights.data_mut().fill(T::zero());
                    bias.fill(T::zero());
                }
                _ => {}
            }
        }
        Ok(model)
    }

    pub fn from_parts(spec: ModelSpec, params: ParamStore<T>) -> Result<Self> {
        spec.validate()?;
        if params.layers.len() != spec.layers.len() {
            return Err(Error::shape("parameter store and spec disagree on layer count"));
        }
        for (i, (l, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
            let ok = match (l, p) {
                (
                    LayerSpec::Conv {
                        kernel,
                        in_channels,
                        out_channels,
                        ..
                    },
                    LayerParams::Conv { kernels, bias },
                ) => {
                    kernels.shape() == [*kernel, *kernel, *in_channels, *out_channels]
                        && bias.len() == *out_channels
                }
                (
                    LayerSpec::BatchNorm { channels },
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        moving_mean,
                        moving_var,
                    },
                ) => [gamma, beta, moving_mean, moving_var]
                    .iter()
                    .all(|v| v.len() == *channels),
                (LayerSpec::Dense { inputs, units }, LayerParams::Dense { weights, bias }) => {
                    weights.shape() == [*inputs, *units] && bias.len() == *units
                }
                (_, LayerParams::None) => l.param_counts() == (0, 0),
                _ => false,
            };
            if !ok {
                return Err(Error::shape(format!("layer {i} parameters do not match {l:?}")));
            }
        }
        Ok(Self { spec, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            params: self.params.cast(),
        }
    }

    pub fn count_params(&self) -> ParamCount {
        self.spec.count_params()
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let (n, h, w, c) = batch.dims4()?;
        if (h, w, c) != self.spec.input_shape {
            return Err(Error::shape(format!(
                "batch images are {h}x{w}x{c} but the model expects {:?}",
                self.spec.input_shape
            )));
        }
        Ok(n)
    }

    /// Inference-mode probabilities for a `(B, H, W, C)` batch.
    ///
    /// Images are processed independently (batch norm uses moving
    /// statistics), so the result does not depend on how inputs are batched.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<T>> {
        let n = self.check_batch(batch)?;
        (0..n)
            .into_par_iter()
            .map(|i| self.predict_image(batch.image(i)?))
            .collect()
    }

    fn predict_image(&self, image: Tensor<T>) -> Result<T> {
        let mut x = image;
        for (layer, params) in self.spec.layers.iter().zip(&self.params.layers) {
            x = match (layer, params) {
                (LayerSpec::Conv { stride, padding, .. }, LayerParams::Conv { kernels, bias }) => {
                    conv2d_forward(&x, &conv_params(kernels, bias, *stride, *padding))?
                }
                (
                    LayerSpec::BatchNorm { .. },
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        moving_mean,
                        moving_var,
                    },
                ) => batch_norm_inference(&x, gamma, beta, moving_mean, moving_var)?,
                (LayerSpec::Relu, _) => activation(&x, Activation::Relu),
                (LayerSpec::MaxPool { window, stride }, _) => maxpool2d(&x, *window, *stride)?.0,
                (LayerSpec::Gap, _) => global_avg_pool(&x)?,
                (LayerSpec::Dense { .. }, LayerParams::Dense { weights, bias }) => {
                    dense_affine(&x, weights, bias)?
                }
                (LayerSpec::Sigmoid, _) => activation(&x, Activation::Sigmoid),
                _ => return Err(Error::shape(format!("parameters missing for {layer:?}"))),
            };
        }
        Ok(x.data()[0])
    }

    /// Training-mode forward pass: batch norm normalizes with batch statistics
    /// and every layer keeps what its backward pass needs.
    pub fn forward_train(&self, batch: &Tensor<T>) -> Result<TrainForward<T>> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut logits = None;
        for (layer, params) in self.spec.layers.iter().zip(&self.params.layers) {
            let (next, cache) = match (layer, params) {
                (LayerSpec::Conv { stride, padding, .. }, LayerParams::Conv { kernels, bias }) => {
                    let y = conv2d_forward(&x, &conv_params(kernels, bias, *stride, *padding))?;
                    (y, LayerCache::Conv { input: x })
                }
                (LayerSpec::BatchNorm { .. }, LayerParams::BatchNorm { gamma, beta, .. }) => {
                    let (y, cache) = batch_norm_train(&x, gamma, beta)?;
                    (y, LayerCache::BatchNorm { cache })
                }
                (LayerSpec::Relu, _) => {
                    let y = activation(&x, Activation::Relu);
                    (
                        y.clone(),
                        LayerCache::Relu {
                            input: x,
                            output: y,
                        },
                    )
                }
                (LayerSpec::MaxPool { window, stride }, _) => {
                    let (y, index) = maxpool2d(&x, *window, *stride)?;
                    (y, LayerCache::MaxPool { index })
                }
                (LayerSpec::Gap, _) => {
                    let y = global_avg_pool(&x)?;
                    (
                        y,
                        LayerCache::Gap {
                            input_shape: x.shape().to_vec(),
                        },
                    )
                }
                (LayerSpec::Dense { .. }, LayerParams::Dense { weights, bias }) => {
                    let y = dense_affine(&x, weights, bias)?;
                    (y, LayerCache::Dense { input: x })
                }
                (LayerSpec::Sigmoid, _) => {
                    logits = Some(x.data().to_vec());
                    (activation(&x, Activation::Sigmoid), LayerCache::Sigmoid)
                }
                _ => return Err(Error::shape(format!("parameters missing for {layer:?}"))),
            };
            caches.push(cache);
            x = next;
        }
        Ok(TrainForward {
            logits: logits.expect("validated spec ends in sigmoid"),
            probs: x.into_data(),
            caches,
        })
    }

    /// Backpropagates a gradient given at the pre-sigmoid logits.
    ///
    /// Returns one gradient buffer per entry of [`ParamStore::trainable`].
    pub fn backward_from_logits(
        &self,
        forward: &TrainForward<T>,
        grad_logits: &[T],
    ) -> Result<Vec<Vec<T>>> {
        if grad_logits.len() != forward.logits.len() {
            return Err(Error::shape("logit gradient length differs from batch size"));
        }
        let mut grad = Tensor::new(vec![grad_logits.len(), 1], grad_logits.to_vec())?;
        // Collected back to front, reversed at the end.
        let mut grads: Vec<Vec<T>> = Vec::new();
        let layers = self.spec.layers.iter().zip(&self.params.layers);
        for ((layer, params), cache) in layers.zip(&forward.caches).rev() {
            grad = match (cache, params) {
                (LayerCache::Sigmoid, _) => grad,
                (LayerCache::Dense { input }, LayerParams::Dense { weights, .. }) => {
                    let g = dense_backward(input, weights, &grad)?;
                    grads.push(g.grad_bias);
                    grads.push(g.grad_weights.into_data());
                    g.grad_input
                }
                (LayerCache::Gap { input_shape }, _) => {
                    global_avg_pool_backward(input_shape, &grad)?
                }
                (LayerCache::MaxPool { index }, _) => maxpool2d_backward(index, &grad)?,
                (LayerCache::Relu { input, output }, _) => {
                    activation_backward(Activation::Relu, input, output, &grad)?
                }
                (LayerCache::BatchNorm { cache }, LayerParams::BatchNorm { gamma, .. }) => {
                    let g = batch_norm_backward(cache, gamma, &grad)?;
                    grads.push(g.grad_beta);
                    grads.push(g.grad_gamma);
                    g.grad_input
                }
                (LayerCache::Conv { input }, LayerParams::Conv { kernels, bias }) => {
                    let LayerSpec::Conv { stride, padding, .. } = layer else {
                        unreachable!("cache kind follows spec kind")
                    };
                    let g =
                        conv2d_backward(input, &conv_params(kernels, bias, *stride, *padding), &grad)?;
                    grads.push(g.grad_bias);
                    grads.push(g.grad_kernels.into_data());
                    g.grad_input
                }
                _ => return Err(Error::shape(format!("cache does not match {layer:?}"))),
            };
        }
        grads.reverse();
        Ok(grads)
    }

    /// True while every batch-norm layer still holds its initial moving
    /// statistics (mean 0, variance 1).
    pub fn moving_stats_untouched(&self) -> bool {
        self.params.layers.iter().all(|l| match l {
            LayerParams::BatchNorm {
                moving_mean,
                moving_var,
                ..
            } => moving_mean.iter().all(|v| v.is_zero()) && moving_var.iter().all(|v| v.is_one()),
            _ => true,
        })
    }

    /// Exponential moving average update of batch-norm statistics:
    /// `moving = momentum * moving + (1 - momentum) * batch`.
    pub fn update_moving_stats(&mut self, forward: &TrainForward<T>, momentum: f64) {
        let m = T::from_f64_lossy(momentum);
        let one_m = T::one() - m;
        for (i, mean, var) in forward.batch_stats() {
            if let LayerParams::BatchNorm {
                moving_mean,
                moving_var,
                ..
            } = &mut self.params.layers[i]
            {
                for (mm, &b) in moving_mean.iter_mut().zip(mean) {
                    *mm = m * *mm + one_m * b;
                }
                for (mv, &b) in moving_var.iter_mut().zip(var) {
                    *mv = m * *mv + one_m * b;
                }
            }
        }
    }
}

fn conv_params<T: Scalar>(
    kernels: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> ConvParams<T> {
    // TODO: borrow instead of cloning once ConvParams holds tensor views.
    ConvParams {
        kernels: kernels.clone(),
        bias: bias.to_vec(),
        stride,
        padding,
    }
}
