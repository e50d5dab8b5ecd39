//! CNET1 weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! header (16 bytes)  magic "CNET1\0" | u16 version | u32 layer count | u32 total params
//! spec block         u32 H | u32 W | u32 C | u32 name length | name (UTF-8)
//!                    per layer: u8 kind tag + kind-specific u32 fields
//! parameters         f32 values, layer declaration order
//! trailer            u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{LayerParams, LayerSpec, Model, ModelSpec, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Padding, Tensor};

pub const MAGIC: [u8; 6] = *b"CNET1\0";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

const TAG_CONV: u8 = 1;
const TAG_BATCHNORM: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_MAXPOOL: u8 = 4;
const TAG_GAP: u8 = 5;
const TAG_DENSE: u8 = 6;
const TAG_SIGMOID: u8 = 7;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let spec = &model.spec;
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, spec.layers.len())?;
    put_u32(&mut buf, spec.count_params().total)?;

    let (h, w, c) = spec.input_shape;
    for v in [h, w, c, spec.name.len()] {
        put_u32(&mut buf, v)?;
    }
    buf.extend_from_slice(spec.name.as_bytes());
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Conv {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
            } => {
                buf.push(TAG_CONV);
                let pad = match padding {
                    Padding::Valid => 0,
                    Padding::Same => 1,
                };
                for v in [kernel, in_channels, out_channels, stride, pad] {
                    put_u32(&mut buf, v)?;
                }
            }
            LayerSpec::BatchNorm { channels } => {
                buf.push(TAG_BATCHNORM);
                put_u32(&mut buf, channels)?;
            }
            LayerSpec::Relu => buf.push(TAG_RELU),
            LayerSpec::MaxPool { window, stride } => {
                buf.push(TAG_MAXPOOL);
                put_u32(&mut buf, window)?;
                put_u32(&mut buf, stride)?;
            }
            LayerSpec::Gap => buf.push(TAG_GAP),
            LayerSpec::Dense { inputs, units } => {
                buf.push(TAG_DENSE);
                put_u32(&mut buf, inputs)?;
                put_u32(&mut buf, units)?;
            }
            LayerSpec::Sigmoid => buf.push(TAG_SIGMOID),
        }
    }

    for values in model.params.all() {
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("file truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.saturating_mul(4), what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Format(format!(
            "file too short ({} bytes) for a CNET1 model",
            bytes.len()
        )));
    }
    if bytes[..6] != MAGIC {
        return Err(Error::Format("bad magic, not a CNET1 file".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported CNET1 version {version}")));
    }
    let stored = u32::from_le_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Format(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }

    let mut r = Reader { bytes: body, pos: 8 };
    let layer_count = r.u32("layer count")?;
    let total_params = r.u32("parameter count")?;
    let h = r.u32("input height")?;
    let w = r.u32("input width")?;
    let c = r.u32("input channels")?;
    let name_len = r.u32("name length")?;
    let name = std::str::from_utf8(r.take(name_len, "model name")?)
        .map_err(|_| Error::Format("model name is not UTF-8".into()))?
        .to_string();

    let mut layers = Vec::with_capacity(layer_count.min(1024));
    for i in 0..layer_count {
        let layer = match r.u8("layer tag")? {
            TAG_CONV => {
                let kernel = r.u32("conv kernel")?;
                let in_channels = r.u32("conv in channels")?;
                let out_channels = r.u32("conv out channels")?;
                let stride = r.u32("conv stride")?;
                let padding = match r.u32("conv padding")? {
                    0 => Padding::Valid,
                    1 => Padding::Same,
                    p => return Err(Error::Format(format!("layer {i}: unknown padding {p}"))),
                };
                LayerSpec::Conv {
                    kernel,
                    in_channels,
                    out_channels,
                    stride,
                    padding,
                }
            }
            TAG_BATCHNORM => LayerSpec::BatchNorm {
                channels: r.u32("batch norm channels")?,
            },
            TAG_RELU => LayerSpec::Relu,
            TAG_MAXPOOL => LayerSpec::MaxPool {
                window: r.u32("pool window")?,
                stride: r.u32("pool stride")?,
            },
            TAG_GAP => LayerSpec::Gap,
            TAG_DENSE => LayerSpec::Dense {
                inputs: r.u32("dense inputs")?,
                units: r.u32("dense units")?,
            },
            TAG_SIGMOID => LayerSpec::Sigmoid,
            t => return Err(Error::Format(format!("layer {i}: unknown kind tag {t}"))),
        };
        layers.push(layer);
    }
    let spec = ModelSpec::new(name, (h, w, c), layers)
        .map_err(|e| Error::Format(format!("invalid model spec: {e}")))?;
    if spec.count_params().total != total_params {
        return Err(Error::Format(format!(
            "header declares {total_params} parameters, spec implies {}",
            spec.count_params().total
        )));
    }

    let mut params = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        params.push(match *layer {
            LayerSpec::Conv {
                kernel,
                in_channels,
                out_channels,
                ..
            } => LayerParams::Conv {
                kernels: Tensor::new(
                    vec![kernel, kernel, in_channels, out_channels],
                    r.f32s(kernel * kernel * in_channels * out_channels, "conv kernels")?,
                )?,
                bias: r.f32s(out_channels, "conv bias")?,
            },
            LayerSpec::BatchNorm { channels } => LayerParams::BatchNorm {
                gamma: r.f32s(channels, "batch norm gamma")?,
                beta: r.f32s(channels, "batch norm beta")?,
                moving_mean: r.f32s(channels, "batch norm moving mean")?,
                moving_var: r.f32s(channels, "batch norm moving variance")?,
            },
            LayerSpec::Dense { inputs, units } => LayerParams::Dense {
                weights: Tensor::new(vec![inputs, units], r.f32s(inputs * units, "dense weights")?)?,
                bias: r.f32s(units, "dense bias")?,
            },
            _ => LayerParams::None,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} unexpected bytes after parameters",
            body.len() - r.pos
        )));
    }
    Model::from_parts(spec, ParamStore { layers: params })
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        Model::init(ModelSpec::castnet_tiny((64, 64, 1)).unwrap(), 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let model = tiny();
        let bytes = encode_model(&model).unwrap();
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn size_arithmetic() {
        let model = tiny();
        let bytes = encode_model(&model).unwrap();
        let spec_block = 16
            + model.spec.name.len()
            + model
                .spec
                .layers
                .iter()
                .map(|l| match l {
                    LayerSpec::Conv { .. } => 1 + 5 * 4,
                    LayerSpec::BatchNorm { .. } => 1 + 4,
                    LayerSpec::MaxPool { .. } | LayerSpec::Dense { .. } => 1 + 8,
                    _ => 1,
                })
                .sum::<usize>();
        assert_eq!(bytes.len(), HEADER_LEN + spec_block + 4 * 3777 + 4);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_model(&tiny()).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::Format(m)) if m.contains("magic")));

        let mut bad = bytes.clone();
        bad[6] = 9;
        assert!(matches!(decode_model(&bad), Err(Error::Format(m)) if m.contains("version")));

        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0xff;
        assert!(matches!(decode_model(&bad), Err(Error::Format(m)) if m.contains("checksum")));

        assert!(decode_model(&bytes[..10]).is_err());
        let truncated = &bytes[..bytes.len() - 100];
        assert!(decode_model(truncated).is_err());
    }
}
