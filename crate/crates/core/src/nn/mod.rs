//! Minimal dense inference engine with streaming execution.
//!
//! A [`ModelSpec`] is an ordered list of [`Layer`]s applied to `[C, H, W]`
//! frames. Spatial layers act frame by frame. Temporal causal convolutions
//! and the recurrent cells carry state across frames, so a model can run
//! either offline over a whole `[T, C, H, W]` sequence ([`forward_offline`])
//! or one frame at a time ([`stream_step`]) with identical results.
//!
//! Arithmetic is `f32`. Every kernel accumulates in a fixed order (bias
//! first, then input channel, kernel row, kernel column), which keeps
//! results bit-reproducible on one platform.

mod exec;
pub mod init;
mod ops;
mod recurrent;
pub mod weights;

pub use exec::{
    activation_sparsity, decode_output, forward_offline, stream_init, stream_step,
    temporal_causal_conv_offline, SparsityReport, StreamState,
};
pub use ops::apply_layer;
pub use recurrent::{gru_cell, ltv_ssm_cell, softplus, ssm_update, GruParams, SsmParams};

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, invalid, Result};

/// 2-D convolution with zero padding. Depthwise and pointwise layers are
/// the `groups == channels` and `1 x 1` special cases.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    /// `[out, in / groups, kh, kw]`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    fn validate(&self) -> Result<()> {
        let g = self.groups;
        if g == 0 || !self.in_channels.is_multiple_of(g) || !self.out_channels.is_multiple_of(g) {
            return Err(invalid("conv groups must divide both channel counts"));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(invalid("conv kernel and stride must be positive"));
        }
        let n = self.out_channels * self.in_channels / g * self.kernel_h * self.kernel_w;
        check_len("conv2d weight", self.weight.len(), n)?;
        check_len("conv2d bias", self.bias.len(), self.out_channels)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel_h || pw < self.kernel_w {
            return None;
        }
        Some((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }
}

/// Inference-time batch normalization, `(x - mean) / sqrt(var + eps) * gamma + beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f32,
}

pub const BATCHNORM_EPS: f32 = 1e-5;

impl BatchNorm {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self) -> Result<()> {
        let c = self.mean.len();
        for (name, v) in [("var", &self.var), ("gamma", &self.gamma), ("beta", &self.beta)] {
            check_len(&format!("batchnorm {name}"), v.len(), c)?;
        }
        if self.var.iter().any(|&v| v < 0.0) || self.eps <= 0.0 {
            return Err(invalid("batchnorm variance must be >= 0 and eps > 0"));
        }
        Ok(())
    }
}

/// Fully connected layer over the flattened input; output is `[out, 1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Causal convolution along time, applied independently at every pixel.
///
/// Output frame `t` is `bias + sum_j w[.., j] * x[t - (K - 1) + j]`, with
/// frames before the start reading as zero. `weight[.., K - 1]` multiplies
/// the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Each output channel reads only its own input channel.
    pub depthwise: bool,
    /// `[out, in, K]`, or `[out, 1, K]` when depthwise.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl TemporalConv {
    pub fn in_per_out(&self) -> usize {
        if self.depthwise {
            1
        } else {
            self.in_channels
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kernel == 0 {
            return Err(invalid("temporal kernel must be positive"));
        }
        if self.depthwise && self.in_channels != self.out_channels {
            return Err(invalid("depthwise temporal conv needs equal channel counts"));
        }
        check_len(
            "temporal conv weight",
            self.weight.len(),
            self.out_channels * self.in_per_out() * self.kernel,
        )?;
        check_len("temporal conv bias", self.bias.len(), self.out_channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    DepthwiseConv2d(Conv2d),
    PointwiseConv2d(Conv2d),
    BatchNorm(BatchNorm),
    Relu,
    AvgPool2d { kernel: usize, stride: usize },
    GlobalAvgPool,
    FullyConnected(Linear),
    TemporalCausalConv(TemporalConv),
    Gru(GruParams),
    LtvSsm(SsmParams),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::DepthwiseConv2d(_) => "depthwise_conv2d",
            Layer::PointwiseConv2d(_) => "pointwise_conv2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::AvgPool2d { .. } => "avg_pool2d",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::FullyConnected(_) => "fully_connected",
            Layer::TemporalCausalConv(_) => "temporal_causal_conv",
            Layer::Gru(_) => "gru",
            Layer::LtvSsm(_) => "ltv_ssm",
        }
    }

    /// Whether the layer carries state from one frame to the next.
    pub fn is_stateful(&self) -> bool {
        matches!(
            self,
            Layer::TemporalCausalConv(_) | Layer::Gru(_) | Layer::LtvSsm(_)
        )
    }

    fn validate(&self) -> Result<()> {
        match self {
            Layer::Conv2d(c) => c.validate(),
            Layer::DepthwiseConv2d(c) => {
                c.validate()?;
                if c.groups != c.in_channels || c.in_channels != c.out_channels {
                    return Err(invalid("depthwise conv needs groups == in == out channels"));
                }
                Ok(())
            }
            Layer::PointwiseConv2d(c) => {
                c.validate()?;
                if c.kernel_h != 1 || c.kernel_w != 1 || c.groups != 1 || c.padding != 0 {
                    return Err(invalid("pointwise conv must be 1x1, ungrouped and unpadded"));
                }
                Ok(())
            }
            Layer::BatchNorm(b) => b.validate(),
            Layer::Relu | Layer::GlobalAvgPool => Ok(()),
            Layer::AvgPool2d { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err(invalid("pool kernel and stride must be positive"));
                }
                Ok(())
            }
            Layer::FullyConnected(l) => {
                check_len("fc weight", l.weight.len(), l.in_features * l.out_features)?;
                check_len("fc bias", l.bias.len(), l.out_features)
            }
            Layer::TemporalCausalConv(t) => t.validate(),
            Layer::Gru(g) => g.validate(),
            Layer::LtvSsm(s) => s.validate(),
        }
    }

    /// Output dims for a `[C, H, W]` input, or a mismatch error.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        let need_c = |want: usize| {
            if c == want {
                Ok(())
            } else {
                Err(dim_mismatch(self.kind(), &[want, h, w], &input))
            }
        };
        let flat = c * h * w;
        match self {
            Layer::Conv2d(k) | Layer::DepthwiseConv2d(k) | Layer::PointwiseConv2d(k) => {
                need_c(k.in_channels)?;
                let (oh, ow) = k
                    .output_hw(h, w)
                    .ok_or_else(|| dim_mismatch(self.kind(), &[c, k.kernel_h, k.kernel_w], &input))?;
                Ok([k.out_channels, oh, ow])
            }
            Layer::BatchNorm(b) => need_c(b.channels()).map(|_| input),
            Layer::Relu => Ok(input),
            Layer::AvgPool2d { kernel, stride } => {
                if h < *kernel || w < *kernel {
                    return Err(dim_mismatch(self.kind(), &[c, *kernel, *kernel], &input));
                }
                Ok([c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            Layer::GlobalAvgPool => Ok([c, 1, 1]),
            Layer::FullyConnected(l) => {
                if flat != l.in_features {
                    return Err(dim_mismatch(self.kind(), &[l.in_features], &[flat]));
                }
                Ok([l.out_features, 1, 1])
            }
            Layer::TemporalCausalConv(t) => need_c(t.in_channels).map(|_| [t.out_channels, h, w]),
            Layer::Gru(g) => {
                if flat != g.input_size {
                    return Err(dim_mismatch(self.kind(), &[g.input_size], &[flat]));
                }
                Ok([g.hidden_size, 1, 1])
            }
            Layer::LtvSsm(s) => {
                if flat != s.d_model {
                    return Err(dim_mismatch(self.kind(), &[s.d_model], &[flat]));
                }
                Ok([s.d_model, 1, 1])
            }
        }
    }

    /// Multiply-accumulates per frame for a given input, ignoring sparsity.
    /// Normalization, activation and pooling count as zero.
    pub fn macs(&self, input: [usize; 3]) -> Result<u64> {
        let out = self.output_dims(input)?;
        let [_, h, w] = input;
        let sites = (out[1] * out[2]) as u64;
        Ok(match self {
            Layer::Conv2d(k) | Layer::DepthwiseConv2d(k) | Layer::PointwiseConv2d(k) => {
                out[0] as u64 * sites * (k.in_channels / k.groups * k.kernel_h * k.kernel_w) as u64
            }
            Layer::FullyConnected(l) => (l.in_features * l.out_features) as u64,
            Layer::TemporalCausalConv(t) => {
                (t.out_channels * t.in_per_out() * t.kernel) as u64 * (h * w) as u64
            }
            Layer::Gru(g) => (3 * g.hidden_size * (g.input_size + g.hidden_size)) as u64,
            Layer::LtvSsm(s) => {
                let (d, n) = (s.d_model as u64, s.d_state as u64);
                d * d + 2 * n * d + 2 * d * n + d
            }
            _ => 0,
        })
    }
}

/// How the final layer's output maps to a pupil prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// Raw output, no decoding.
    None,
    /// `[3, rows, cols]` logits: presence, x offset, y offset.
    Grid { rows: usize, cols: usize },
    /// Two values read as normalized `(x, y)` in `[0, 1]`.
    Regression,
}

/// A validated model: every layer's dims chain from the input to the head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    input: [usize; 3],
    layers: Vec<Layer>,
    head: Head,
    dims: Vec<[usize; 3]>,
}

impl ModelSpec {
    pub fn new(input: [usize; 3], layers: Vec<Layer>, head: Head) -> Result<Self> {
        if input.contains(&0) {
            return Err(invalid("model input dims must be non-zero"));
        }
        let mut dims = Vec::with_capacity(layers.len());
        let mut cur = input;
        for l in &layers {
            l.validate()?;
            cur = l.output_dims(cur)?;
            dims.push(cur);
        }
        match head {
            Head::Grid { rows, cols } if cur != [3, rows, cols] => {
                return Err(dim_mismatch("grid head", &[3, rows, cols], &cur));
            }
            Head::Regression if cur[0] * cur[1] * cur[2] != 2 => {
                return Err(dim_mismatch("regression head", &[2, 1, 1], &cur));
            }
            _ => {}
        }
        Ok(ModelSpec {
            input,
            layers,
            head,
            dims,
        })
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.input
    }

    pub fn output_dims(&self) -> [usize; 3] {
        self.dims.last().copied().unwrap_or(self.input)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    /// Input dims of layer `i`.
    pub fn layer_input(&self, i: usize) -> [usize; 3] {
        if i == 0 {
            self.input
        } else {
            self.dims[i - 1]
        }
    }

    pub fn layer_output(&self, i: usize) -> [usize; 3] {
        self.dims[i]
    }

    pub fn macs_per_layer(&self) -> Vec<u64> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| l.macs(self.layer_input(i)).expect("chain-checked"))
            .collect()
    }

    pub fn macs_per_frame(&self) -> u64 {
        self.macs_per_layer().iter().sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(weights::param_count).sum()
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(dim_mismatch(what, &[want], &[got]));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Conv2d {
        Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel_h: k,
            kernel_w: k,
            stride,
            padding: pad,
            groups: 1,
            weight: vec![0.0; cout * cin * k * k],
            bias: vec![0.0; cout],
        }
    }

    #[test]
    fn chain_check() {
        let m = ModelSpec::new(
            [2, 8, 8],
            vec![Layer::Conv2d(conv(2, 4, 3, 2, 1)), Layer::Relu, Layer::GlobalAvgPool],
            Head::None,
        )
        .unwrap();
        assert_eq!(m.layer_output(0), [4, 4, 4]);
        assert_eq!(m.output_dims(), [4, 1, 1]);

        let bad = ModelSpec::new([3, 8, 8], vec![Layer::Conv2d(conv(2, 4, 3, 1, 1))], Head::None);
        assert!(bad.is_err());
        let head = ModelSpec::new([2, 3, 4], vec![Layer::Conv2d(conv(2, 3, 1, 1, 0))], Head::Grid { rows: 3, cols: 4 });
        assert!(head.is_ok());
        let head = ModelSpec::new([2, 3, 5], vec![Layer::Conv2d(conv(2, 3, 1, 1, 0))], Head::Grid { rows: 3, cols: 4 });
        assert!(head.is_err());
    }

    #[test]
    fn conv_mac_count() {
        // out_C * out_H * out_W * in_C * Kh * Kw
        let l = Layer::Conv2d(conv(3, 5, 3, 1, 1));
        assert_eq!(l.macs([3, 10, 12]).unwrap(), 5 * 10 * 12 * 3 * 3 * 3);
        let l = Layer::Conv2d(conv(3, 5, 3, 2, 0));
        assert_eq!(l.macs([3, 9, 9]).unwrap(), 5 * 4 * 4 * 3 * 9);
    }
}
