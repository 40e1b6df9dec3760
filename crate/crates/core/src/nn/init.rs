//! Seeded model construction: random architectures for testing and a
//! representative streaming backbone for benchmarking.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BatchNorm, Conv2d, GruParams, Head, Layer, Linear, ModelSpec, SsmParams, TemporalConv, BATCHNORM_EPS};

fn uniform(rng: &mut impl Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

fn fan_scale(fan_in: usize) -> f32 {
    (1.0 / fan_in.max(1) as f32).sqrt()
}

pub fn conv2d(rng: &mut impl Rng, cin: usize, cout: usize, k: usize, stride: usize, groups: usize) -> Conv2d {
    let s = fan_scale(cin / groups * k * k);
    Conv2d {
        in_channels: cin,
        out_channels: cout,
        kernel_h: k,
        kernel_w: k,
        stride,
        padding: k / 2,
        groups,
        weight: uniform(rng, cout * cin / groups * k * k, s),
        bias: uniform(rng, cout, 0.1),
    }
}

pub fn batchnorm(rng: &mut impl Rng, c: usize) -> BatchNorm {
    BatchNorm {
        mean: uniform(rng, c, 0.2),
        var: (0..c).map(|_| rng.random_range(0.5..1.5)).collect(),
        gamma: (0..c).map(|_| rng.random_range(0.5..1.5)).collect(),
        beta: uniform(rng, c, 0.2),
        eps: BATCHNORM_EPS,
    }
}

pub fn temporal(rng: &mut impl Rng, cin: usize, cout: usize, k: usize, depthwise: bool) -> TemporalConv {
    let ipo = if depthwise { 1 } else { cin };
    TemporalConv {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        depthwise,
        weight: uniform(rng, cout * ipo * k, fan_scale(ipo * k)),
        bias: uniform(rng, cout, 0.1),
    }
}

pub fn linear(rng: &mut impl Rng, fin: usize, fout: usize) -> Linear {
    Linear {
        in_features: fin,
        out_features: fout,
        weight: uniform(rng, fin * fout, fan_scale(fin)),
        bias: uniform(rng, fout, 0.1),
    }
}

pub fn gru(rng: &mut impl Rng, input: usize, hidden: usize) -> GruParams {
    GruParams {
        input_size: input,
        hidden_size: hidden,
        w_x: uniform(rng, 3 * hidden * input, fan_scale(input)),
        w_h: uniform(rng, 3 * hidden * hidden, fan_scale(hidden)),
        bias: uniform(rng, 3 * hidden, 0.1),
    }
}

pub fn ltv_ssm(rng: &mut impl Rng, d: usize, n: usize) -> SsmParams {
    SsmParams {
        d_model: d,
        d_state: n,
        a: (0..d * n).map(|_| -rng.random_range(0.1..1.0)).collect(),
        w_delta: uniform(rng, d * d, fan_scale(d)),
        b_delta: uniform(rng, d, 0.5),
        w_b: uniform(rng, n * d, fan_scale(d)),
        w_c: uniform(rng, n * d, fan_scale(n)),
        d_skip: uniform(rng, d, 1.0),
    }
}

/// A random valid model over a small random input.
///
/// A spatial trunk of 2 to 6 blocks drawn from every frame-wise and
/// temporal layer kind is optionally followed by a flattening layer and a
/// GRU and/or LTV-SSM tail, so every layer kind shows up across a few
/// dozen draws.
pub fn random_model(rng: &mut impl Rng) -> ModelSpec {
    let mut c = rng.random_range(1..=3usize);
    let mut h = rng.random_range(3..=9usize);
    let mut w = rng.random_range(3..=9usize);
    let input = [c, h, w];
    let mut layers = Vec::new();

    for _ in 0..rng.random_range(2..=6) {
        let layer = match rng.random_range(0..8) {
            0 => {
                let cout = rng.random_range(1..=4);
                let k = [1, 3][rng.random_range(0..2)];
                let stride = if h >= 4 && w >= 4 { rng.random_range(1..=2) } else { 1 };
                let groups = if c % 2 == 0 && cout % 2 == 0 && rng.random_bool(0.3) { 2 } else { 1 };
                Layer::Conv2d(conv2d(rng, c, cout, k, stride, groups))
            }
            1 => Layer::DepthwiseConv2d(conv2d(rng, c, c, 3, 1, c)),
            2 => {
                let cout = rng.random_range(1..=4);
                Layer::PointwiseConv2d(conv2d(rng, c, cout, 1, 1, 1))
            }
            3 => Layer::BatchNorm(batchnorm(rng, c)),
            4 => Layer::Relu,
            5 if h >= 2 && w >= 2 => Layer::AvgPool2d { kernel: 2, stride: rng.random_range(1..=2) },
            _ => {
                let k = [2, 3, 5][rng.random_range(0..3)];
                if rng.random_bool(0.5) {
                    Layer::TemporalCausalConv(temporal(rng, c, c, k, true))
                } else {
                    let cout = rng.random_range(1..=4);
                    Layer::TemporalCausalConv(temporal(rng, c, cout, k, false))
                }
            }
        };
        [c, h, w] = layer.output_dims([c, h, w]).expect("generated layer fits");
        layers.push(layer);
    }

    if rng.random_bool(0.6) {
        let mut feat = if rng.random_bool(0.5) {
            layers.push(Layer::GlobalAvgPool);
            c
        } else {
            c * h * w
        };
        if rng.random_bool(0.7) {
            let hidden = rng.random_range(1..=6);
            layers.push(Layer::Gru(gru(rng, feat, hidden)));
            feat = hidden;
        }
        if rng.random_bool(0.7) {
            let n = rng.random_range(1..=4);
            layers.push(Layer::LtvSsm(ltv_ssm(rng, feat, n)));
        }
        let out = rng.random_range(1..=4);
        layers.push(Layer::FullyConnected(linear(rng, feat, out)));
    }
    ModelSpec::new(input, layers, Head::None).expect("generated model chains")
}

/// Input dims of [`representative_model`]: two polarity channels on an
/// 8x downsampled 640x480 sensor.
pub const REPRESENTATIVE_INPUT: [usize; 3] = [2, 60, 80];

/// A small spatiotemporal backbone with a 3x4 grid head, seeded weights.
///
/// A stride-1 conv stem (which the sparse executor can run on active sites
/// only) and pooling, then two depthwise-separable blocks each preceded by
/// a depthwise causal temporal convolution, then pooling to the grid. The
/// layout is illustrative; it is not a replica of any published network.
pub fn representative_model(seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let layers = vec![
        Layer::Conv2d(conv2d(r, 2, 8, 3, 1, 1)),
        Layer::BatchNorm(batchnorm(r, 8)),
        Layer::Relu,
        Layer::AvgPool2d { kernel: 2, stride: 2 },
        Layer::TemporalCausalConv(temporal(r, 8, 8, 5, true)),
        Layer::DepthwiseConv2d(conv2d(r, 8, 8, 3, 2, 8)),
        Layer::PointwiseConv2d(conv2d(r, 8, 32, 1, 1, 1)),
        Layer::BatchNorm(batchnorm(r, 32)),
        Layer::Relu,
        Layer::TemporalCausalConv(temporal(r, 32, 32, 3, true)),
        Layer::DepthwiseConv2d(conv2d(r, 32, 32, 3, 1, 32)),
        Layer::PointwiseConv2d(conv2d(r, 32, 32, 1, 1, 1)),
        Layer::BatchNorm(batchnorm(r, 32)),
        Layer::Relu,
        Layer::AvgPool2d { kernel: 5, stride: 5 },
        Layer::PointwiseConv2d(conv2d(r, 32, 3, 1, 1, 1)),
    ];
    ModelSpec::new(REPRESENTATIVE_INPUT, layers, Head::Grid { rows: 3, cols: 4 }).expect("preset chains")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn random_models_cover_every_layer_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut kinds = BTreeSet::new();
        for _ in 0..100 {
            for l in random_model(&mut rng).layers() {
                kinds.insert(l.kind());
            }
        }
        assert_eq!(kinds.len(), 11, "{kinds:?}");
    }

    #[test]
    fn representative_shape() {
        let m = representative_model(0);
        assert_eq!(m.output_dims(), [3, 3, 4]);
        let macs = m.macs_per_frame();
        assert!((500_000..5_000_000).contains(&macs), "{macs}");
    }
}
