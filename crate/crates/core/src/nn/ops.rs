use super::{BatchNorm, Conv2d, Layer, Linear};
use crate::error::{dim_mismatch, Result};
use crate::tensor::FrameTensor;

/// Applies one layer to a single `[C, H, W]` frame.
///
/// Stateful layers see an all-zero history, which matches the first frame
/// of an offline run.
pub fn apply_layer(layer: &Layer, input: &FrameTensor) -> Result<FrameTensor> {
    let dims: [usize; 3] = input
        .dims()
        .try_into()
        .map_err(|_| dim_mismatch(layer.kind(), &[0, 0, 0], input.dims()))?;
    let out = layer.output_dims(dims)?;
    let x = input.data();
    let data = match layer {
        Layer::Conv2d(k) | Layer::DepthwiseConv2d(k) | Layer::PointwiseConv2d(k) => {
            conv2d(k, x, dims, out)
        }
        Layer::BatchNorm(b) => batchnorm(b, x, dims),
        Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
        Layer::AvgPool2d { kernel, stride } => avg_pool(x, dims, out, *kernel, *stride),
        Layer::GlobalAvgPool => global_avg_pool(x, dims),
        Layer::FullyConnected(l) => linear(l, x),
        Layer::TemporalCausalConv(t) => super::exec::temporal_step(t, dims, &[x]),
        Layer::Gru(g) => super::gru_cell(x, &vec![0.0; g.hidden_size], g)?,
        Layer::LtvSsm(s) => super::ltv_ssm_cell(x, &vec![0.0; s.d_model * s.d_state], s)?.0,
    };
    Ok(FrameTensor::from_raw(out.to_vec(), data))
}

/// Direct convolution. Each output accumulates `bias`, then input channels
/// of its group, kernel rows, kernel columns, in that order.
pub(super) fn conv2d(k: &Conv2d, x: &[f32], [_, h, w]: [usize; 3], [oc_n, oh, ow]: [usize; 3]) -> Vec<f32> {
    let icg = k.in_channels / k.groups;
    let ocg = k.out_channels / k.groups;
    let (kh, kw, s, pad) = (k.kernel_h, k.kernel_w, k.stride, k.padding as isize);
    let mut out = vec![0.0f32; oc_n * oh * ow];
    for oc in 0..oc_n {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(k.bias[oc]);
        let g = oc / ocg;
        for ci in 0..icg {
            let ic = g * icg + ci;
            let src = &x[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = k.weight[((oc * icg + ci) * kh + ky) * kw + kx];
                    // valid output columns: 0 <= ox*s + kx - pad < w
                    let off_x = kx as isize - pad;
                    let ox_lo = if off_x >= 0 { 0 } else { ((-off_x) as usize).div_ceil(s) };
                    let ox_hi = if (w as isize) - off_x <= 0 {
                        0
                    } else {
                        (((w as isize - off_x - 1) as usize) / s + 1).min(ow)
                    };
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * s) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            let base = (ox_lo as isize + off_x) as usize;
                            let n = ox_hi - ox_lo;
                            for (d, &v) in dst[ox_lo..ox_hi].iter_mut().zip(&row[base..base + n]) {
                                *d += wv * v;
                            }
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate().take(ox_hi).skip(ox_lo) {
                                *d += wv * row[((ox * s) as isize + off_x) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn batchnorm(b: &BatchNorm, x: &[f32], [c, h, w]: [usize; 3]) -> Vec<f32> {
    let mut out = Vec::with_capacity(x.len());
    for ch in 0..c {
        let scale = b.gamma[ch] / (b.var[ch] + b.eps).sqrt();
        let (m, beta) = (b.mean[ch], b.beta[ch]);
        out.extend(x[ch * h * w..(ch + 1) * h * w].iter().map(|&v| (v - m) * scale + beta));
    }
    out
}

fn avg_pool(x: &[f32], [c, h, w]: [usize; 3], [_, oh, ow]: [usize; 3], k: usize, s: usize) -> Vec<f32> {
    let norm = 1.0 / (k * k) as f32;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for ky in 0..k {
                    let row = (oy * s + ky) * w + ox * s;
                    acc += src[row..row + k].iter().sum::<f32>();
                }
                out.push(acc * norm);
            }
        }
    }
    out
}

fn global_avg_pool(x: &[f32], [c, h, w]: [usize; 3]) -> Vec<f32> {
    let n = (h * w) as f32;
    (0..c)
        .map(|ch| x[ch * h * w..(ch + 1) * h * w].iter().sum::<f32>() / n)
        .collect()
}

pub(super) fn linear(l: &Linear, x: &[f32]) -> Vec<f32> {
    (0..l.out_features)
        .map(|o| {
            let row = &l.weight[o * l.in_features..(o + 1) * l.in_features];
            row.iter().zip(x).fold(l.bias[o], |acc, (w, v)| acc + w * v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{Conv2d, Layer};
    use super::*;

    fn conv3(weight: Vec<f32>) -> Conv2d {
        Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
            groups: 1,
            weight,
            bias: vec![0.0],
        }
    }

    #[test]
    fn identity_pointwise() {
        let l = Layer::PointwiseConv2d(Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            groups: 1,
            weight: vec![1.0],
            bias: vec![0.0],
        });
        let x = FrameTensor::new(vec![1, 2, 2], vec![1.0, -2.0, 3.0, 4.5]).unwrap();
        assert_eq!(apply_layer(&l, &x).unwrap(), x);
    }

    #[test]
    fn relu() {
        let x = FrameTensor::new(vec![2, 1, 1], vec![-1.0, 2.0]).unwrap();
        assert_eq!(apply_layer(&Layer::Relu, &x).unwrap().data(), [0.0, 2.0]);
    }

    #[test]
    fn ones_conv_counts_neighbours() {
        let x = FrameTensor::new(vec![1, 3, 3], vec![1.0; 9]).unwrap();
        let y = apply_layer(&Layer::Conv2d(conv3(vec![1.0; 9])), &x).unwrap();
        assert_eq!(y.data(), [4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn strided_conv_matches_naive() {
        let (h, w) = (5, 7);
        let x: Vec<f32> = (0..h * w).map(|i| (i as f32 * 0.37).sin()).collect();
        let mut k = conv3((0..9).map(|i| i as f32 - 4.0).collect());
        k.stride = 2;
        let out = k.output_hw(h, w).unwrap();
        let got = conv2d(&k, &x, [1, h, w], [1, out.0, out.1]);
        for oy in 0..out.0 {
            for ox in 0..out.1 {
                let mut acc = 0.0f32;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let iy = (oy * 2 + ky) as isize - 1;
                        let ix = (ox * 2 + kx) as isize - 1;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += k.weight[ky * 3 + kx] * x[iy as usize * w + ix as usize];
                        }
                    }
                }
                assert_eq!(got[oy * out.1 + ox], acc);
            }
        }
    }

    #[test]
    fn batchnorm_and_pools() {
        let b = Layer::BatchNorm(BatchNorm {
            mean: vec![1.0],
            var: vec![4.0 - 1e-5],
            gamma: vec![2.0],
            beta: vec![0.5],
            eps: 1e-5,
        });
        let x = FrameTensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap();
        let y = apply_layer(&b, &x).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-6 && (y.data()[1] - 2.5).abs() < 1e-6);

        let x = FrameTensor::new(vec![1, 2, 4], (0..8).map(|v| v as f32).collect()).unwrap();
        let p = apply_layer(&Layer::AvgPool2d { kernel: 2, stride: 2 }, &x).unwrap();
        assert_eq!(p.dims(), [1, 1, 2]);
        assert_eq!(p.data(), [2.5, 4.5]);
        let g = apply_layer(&Layer::GlobalAvgPool, &x).unwrap();
        assert_eq!(g.data(), [3.5]);
    }
}
