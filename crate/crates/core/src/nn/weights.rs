//! Weights files: a JSON manifest plus a float32 little-endian blob.
//!
//! The manifest lists layers in order. Each parameterized layer names its
//! tensors with dims and a byte offset into the blob. Tensors are stored
//! row-major and back to back in manifest order, so offsets are fully
//! determined by the dims; the loader checks this.
//!
//! ```json
//! {
//!   "format": "evgaze-weights",
//!   "version": 1,
//!   "blob": "model.bin",
//!   "input": [2, 60, 80],
//!   "head": { "kind": "grid", "rows": 3, "cols": 4 },
//!   "layers": [
//!     { "kind": "temporal_causal_conv", "in_channels": 2, "out_channels": 8,
//!       "kernel": 5, "depthwise": false,
//!       "tensors": [ { "name": "weight", "dims": [8, 2, 5], "offset": 0 },
//!                    { "name": "bias", "dims": [8], "offset": 320 } ] },
//!     { "kind": "relu" }
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchNorm, Conv2d, GruParams, Head, Layer, Linear, ModelSpec, SsmParams, TemporalConv};
use crate::error::{Error, Result};

pub const WEIGHTS_FORMAT: &str = "evgaze-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerEntry {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        groups: usize,
        tensors: Vec<TensorEntry>,
    },
    DepthwiseConv2d {
        channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        tensors: Vec<TensorEntry>,
    },
    PointwiseConv2d {
        in_channels: usize,
        out_channels: usize,
        tensors: Vec<TensorEntry>,
    },
    Batchnorm {
        channels: usize,
        eps: f32,
        tensors: Vec<TensorEntry>,
    },
    Relu,
    AvgPool2d {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    FullyConnected {
        in_features: usize,
        out_features: usize,
        tensors: Vec<TensorEntry>,
    },
    TemporalCausalConv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        depthwise: bool,
        tensors: Vec<TensorEntry>,
    },
    Gru {
        input_size: usize,
        hidden_size: usize,
        tensors: Vec<TensorEntry>,
    },
    LtvSsm {
        d_model: usize,
        d_state: usize,
        tensors: Vec<TensorEntry>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsManifest {
    pub format: String,
    pub version: u32,
    /// Blob path, relative to the manifest.
    pub blob: String,
    pub input: [usize; 3],
    pub head: Head,
    pub layers: Vec<LayerEntry>,
}

/// Named parameter tensors of a layer, in blob order.
fn layer_tensors(layer: &Layer) -> Vec<(&'static str, Vec<usize>, &[f32])> {
    match layer {
        Layer::Conv2d(k) | Layer::DepthwiseConv2d(k) | Layer::PointwiseConv2d(k) => vec![
            (
                "weight",
                vec![k.out_channels, k.in_channels / k.groups, k.kernel_h, k.kernel_w],
                &k.weight,
            ),
            ("bias", vec![k.out_channels], &k.bias),
        ],
        Layer::BatchNorm(b) => {
            let c = vec![b.channels()];
            vec![
                ("mean", c.clone(), &b.mean),
                ("var", c.clone(), &b.var),
                ("gamma", c.clone(), &b.gamma),
                ("beta", c, &b.beta),
            ]
        }
        Layer::FullyConnected(l) => vec![
            ("weight", vec![l.out_features, l.in_features], &l.weight),
            ("bias", vec![l.out_features], &l.bias),
        ],
        Layer::TemporalCausalConv(t) => vec![
            ("weight", vec![t.out_channels, t.in_per_out(), t.kernel], &t.weight),
            ("bias", vec![t.out_channels], &t.bias),
        ],
        Layer::Gru(g) => {
            let (i, h) = (g.input_size, g.hidden_size);
            vec![
                ("w_x", vec![3 * h, i], &g.w_x),
                ("w_h", vec![3 * h, h], &g.w_h),
                ("bias", vec![3 * h], &g.bias),
            ]
        }
        Layer::LtvSsm(s) => {
            let (d, n) = (s.d_model, s.d_state);
            vec![
                ("a", vec![d, n], &s.a),
                ("w_delta", vec![d, d], &s.w_delta),
                ("b_delta", vec![d], &s.b_delta),
                ("w_b", vec![n, d], &s.w_b),
                ("w_c", vec![n, d], &s.w_c),
                ("d_skip", vec![d], &s.d_skip),
            ]
        }
        Layer::Relu | Layer::AvgPool2d { .. } | Layer::GlobalAvgPool => Vec::new(),
    }
}

pub fn param_count(layer: &Layer) -> usize {
    layer_tensors(layer).iter().map(|t| t.2.len()).sum()
}

/// Serializes a model to `(manifest JSON, blob bytes)`.
pub fn encode_weights(model: &ModelSpec, blob_name: &str) -> Result<(String, Vec<u8>)> {
    let mut blob = Vec::new();
    let mut layers = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let tensors: Vec<TensorEntry> = layer_tensors(layer)
            .into_iter()
            .map(|(name, dims, data)| {
                let offset = blob.len() as u64;
                for v in data {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
                TensorEntry {
                    name: name.to_string(),
                    dims,
                    offset,
                }
            })
            .collect();
        layers.push(match layer {
            Layer::Conv2d(k) => LayerEntry::Conv2d {
                in_channels: k.in_channels,
                out_channels: k.out_channels,
                kernel: [k.kernel_h, k.kernel_w],
                stride: k.stride,
                padding: k.padding,
                groups: k.groups,
                tensors,
            },
            Layer::DepthwiseConv2d(k) => LayerEntry::DepthwiseConv2d {
                channels: k.in_channels,
                kernel: [k.kernel_h, k.kernel_w],
                stride: k.stride,
                padding: k.padding,
                tensors,
            },
            Layer::PointwiseConv2d(k) => LayerEntry::PointwiseConv2d {
                in_channels: k.in_channels,
                out_channels: k.out_channels,
                tensors,
            },
            Layer::BatchNorm(b) => LayerEntry::Batchnorm {
                channels: b.channels(),
                eps: b.eps,
                tensors,
            },
            Layer::Relu => LayerEntry::Relu,
            Layer::AvgPool2d { kernel, stride } => LayerEntry::AvgPool2d {
                kernel: *kernel,
                stride: *stride,
            },
            Layer::GlobalAvgPool => LayerEntry::GlobalAvgPool,
            Layer::FullyConnected(l) => LayerEntry::FullyConnected {
                in_features: l.in_features,
                out_features: l.out_features,
                tensors,
            },
            Layer::TemporalCausalConv(t) => LayerEntry::TemporalCausalConv {
                in_channels: t.in_channels,
                out_channels: t.out_channels,
                kernel: t.kernel,
                depthwise: t.depthwise,
                tensors,
            },
            Layer::Gru(g) => LayerEntry::Gru {
                input_size: g.input_size,
                hidden_size: g.hidden_size,
                tensors,
            },
            Layer::LtvSsm(s) => LayerEntry::LtvSsm {
                d_model: s.d_model,
                d_state: s.d_state,
                tensors,
            },
        });
    }
    let manifest = WeightsManifest {
        format: WEIGHTS_FORMAT.to_string(),
        version: WEIGHTS_VERSION,
        blob: blob_name.to_string(),
        input: model.input_dims(),
        head: model.head(),
        layers,
    };
    Ok((serde_json::to_string_pretty(&manifest)? + "\n", blob))
}

/// Hands out consecutive tensors from the blob, checking names, dims and
/// offsets against the manifest.
struct BlobReader<'a> {
    blob: &'a [u8],
    cursor: u64,
}

impl BlobReader<'_> {
    fn take(&mut self, entries: &[TensorEntry], idx: usize, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        let fail = |m: String| Error::Format(format!("weights: {m}"));
        let e = entries
            .get(idx)
            .ok_or_else(|| fail(format!("missing tensor `{name}`")))?;
        if e.name != name {
            return Err(fail(format!("expected tensor `{name}`, found `{}`", e.name)));
        }
        if e.dims != dims {
            return Err(Error::DimMismatch {
                context: format!("weights tensor `{name}`"),
                expected: dims.to_vec(),
                got: e.dims.clone(),
            });
        }
        if e.offset != self.cursor {
            return Err(fail(format!(
                "tensor `{name}` at offset {} but blob position is {}",
                e.offset, self.cursor
            )));
        }
        let n: usize = dims.iter().product();
        let end = self.cursor as usize + 4 * n;
        if end > self.blob.len() {
            return Err(fail(format!("tensor `{name}` runs past the end of the blob")));
        }
        let data = self.blob[self.cursor as usize..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.cursor = end as u64;
        Ok(data)
    }
}

pub fn decode_weights(manifest: &WeightsManifest, blob: &[u8]) -> Result<ModelSpec> {
    if manifest.format != WEIGHTS_FORMAT || manifest.version != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "unsupported weights format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let mut r = BlobReader { blob, cursor: 0 };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let expect_none = |t: &[TensorEntry]| -> Result<()> {
            if !t.is_empty() {
                return Err(Error::Format("weights: unexpected extra tensors".into()));
            }
            Ok(())
        };
        let layer = match entry {
            LayerEntry::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                groups,
                tensors,
            } => {
                let g = (*groups).max(1);
                let weight = r.take(tensors, 0, "weight", &[*out_channels, in_channels / g, kernel[0], kernel[1]])?;
                let bias = r.take(tensors, 1, "bias", &[*out_channels])?;
                expect_none(&tensors[2..])?;
                Layer::Conv2d(Conv2d {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel_h: kernel[0],
                    kernel_w: kernel[1],
                    stride: *stride,
                    padding: *padding,
                    groups: *groups,
                    weight,
                    bias,
                })
            }
            LayerEntry::DepthwiseConv2d {
                channels,
                kernel,
                stride,
                padding,
                tensors,
            } => {
                let weight = r.take(tensors, 0, "weight", &[*channels, 1, kernel[0], kernel[1]])?;
                let bias = r.take(tensors, 1, "bias", &[*channels])?;
                expect_none(&tensors[2..])?;
                Layer::DepthwiseConv2d(Conv2d {
                    in_channels: *channels,
                    out_channels: *channels,
                    kernel_h: kernel[0],
                    kernel_w: kernel[1],
                    stride: *stride,
                    padding: *padding,
                    groups: *channels,
                    weight,
                    bias,
                })
            }
            LayerEntry::PointwiseConv2d {
                in_channels,
                out_channels,
                tensors,
            } => {
                let weight = r.take(tensors, 0, "weight", &[*out_channels, *in_channels, 1, 1])?;
                let bias = r.take(tensors, 1, "bias", &[*out_channels])?;
                expect_none(&tensors[2..])?;
                Layer::PointwiseConv2d(Conv2d {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel_h: 1,
                    kernel_w: 1,
                    stride: 1,
                    padding: 0,
                    groups: 1,
                    weight,
                    bias,
                })
            }
            LayerEntry::Batchnorm { channels, eps, tensors } => {
                let c = [*channels];
                let layer = Layer::BatchNorm(BatchNorm {
                    mean: r.take(tensors, 0, "mean", &c)?,
                    var: r.take(tensors, 1, "var", &c)?,
                    gamma: r.take(tensors, 2, "gamma", &c)?,
                    beta: r.take(tensors, 3, "beta", &c)?,
                    eps: *eps,
                });
                expect_none(&tensors[4..])?;
                layer
            }
            LayerEntry::Relu => Layer::Relu,
            LayerEntry::AvgPool2d { kernel, stride } => Layer::AvgPool2d {
                kernel: *kernel,
                stride: *stride,
            },
            LayerEntry::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerEntry::FullyConnected {
                in_features,
                out_features,
                tensors,
            } => {
                let weight = r.take(tensors, 0, "weight", &[*out_features, *in_features])?;
                let bias = r.take(tensors, 1, "bias", &[*out_features])?;
                expect_none(&tensors[2..])?;
                Layer::FullyConnected(Linear {
                    in_features: *in_features,
                    out_features: *out_features,
                    weight,
                    bias,
                })
            }
            LayerEntry::TemporalCausalConv {
                in_channels,
                out_channels,
                kernel,
                depthwise,
                tensors,
            } => {
                let ipo = if *depthwise { 1 } else { *in_channels };
                let weight = r.take(tensors, 0, "weight", &[*out_channels, ipo, *kernel])?;
                let bias = r.take(tensors, 1, "bias", &[*out_channels])?;
                expect_none(&tensors[2..])?;
                Layer::TemporalCausalConv(TemporalConv {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: *kernel,
                    depthwise: *depthwise,
                    weight,
                    bias,
                })
            }
            LayerEntry::Gru {
                input_size,
                hidden_size,
                tensors,
            } => {
                let (i, h) = (*input_size, *hidden_size);
                let layer = Layer::Gru(GruParams {
                    input_size: i,
                    hidden_size: h,
                    w_x: r.take(tensors, 0, "w_x", &[3 * h, i])?,
                    w_h: r.take(tensors, 1, "w_h", &[3 * h, h])?,
                    bias: r.take(tensors, 2, "bias", &[3 * h])?,
                });
                expect_none(&tensors[3..])?;
                layer
            }
            LayerEntry::LtvSsm {
                d_model,
                d_state,
                tensors,
            } => {
                let (d, n) = (*d_model, *d_state);
                let layer = Layer::LtvSsm(SsmParams {
                    d_model: d,
                    d_state: n,
                    a: r.take(tensors, 0, "a", &[d, n])?,
                    w_delta: r.take(tensors, 1, "w_delta", &[d, d])?,
                    b_delta: r.take(tensors, 2, "b_delta", &[d])?,
                    w_b: r.take(tensors, 3, "w_b", &[n, d])?,
                    w_c: r.take(tensors, 4, "w_c", &[n, d])?,
                    d_skip: r.take(tensors, 5, "d_skip", &[d])?,
                });
                expect_none(&tensors[6..])?;
                layer
            }
        };
        layers.push(layer);
    }
    if r.cursor as usize != blob.len() {
        return Err(Error::Format(format!(
            "weights: blob has {} trailing bytes",
            blob.len() - r.cursor as usize
        )));
    }
    if blob.chunks_exact(4).any(|c| !f32::from_le_bytes(c.try_into().unwrap()).is_finite()) {
        return Err(Error::Format("weights: non-finite parameter".into()));
    }
    ModelSpec::new(manifest.input, layers, manifest.head)
}

pub fn load_weights(manifest_path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest: WeightsManifest = serde_json::from_str(&text)?;
    let blob_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.blob);
    let blob = std::fs::read(blob_path)?;
    decode_weights(&manifest, &blob)
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`.
pub fn save_weights(model: &ModelSpec, dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    let blob_name = format!("{stem}.bin");
    let (json, blob) = encode_weights(model, &blob_name)?;
    let manifest_path = dir.join(format!("{stem}.json"));
    std::fs::write(&manifest_path, json)?;
    std::fs::write(dir.join(blob_name), blob)?;
    Ok(manifest_path)
}
