use std::collections::VecDeque;

use super::ops::{apply_layer, conv2d};
use super::{gru_cell, ltv_ssm_cell, Head, Layer, ModelSpec, TemporalConv};
use crate::error::{dim_mismatch, invalid, Result};
use crate::heads::{grid_decode, GridPrediction};
use crate::metrics::PupilPrediction;
use crate::tensor::FrameTensor;

/// One output frame of a temporal causal convolution.
///
/// `frames` holds at most `K` inputs, newest last; any missing older
/// frames read as zero. Accumulation order per output: bias, input
/// channel, then time tap from oldest to newest.
pub(super) fn temporal_step(t: &TemporalConv, [_, h, w]: [usize; 3], frames: &[&[f32]]) -> Vec<f32> {
    debug_assert!(frames.len() <= t.kernel);
    let hw = h * w;
    let k = t.kernel;
    let first_tap = k - frames.len();
    let ipo = t.in_per_out();
    let mut out = vec![0.0f32; t.out_channels * hw];
    for oc in 0..t.out_channels {
        let dst = &mut out[oc * hw..(oc + 1) * hw];
        dst.fill(t.bias[oc]);
        for ci in 0..ipo {
            let ic = if t.depthwise { oc } else { ci };
            for (f, frame) in frames.iter().enumerate() {
                let wv = t.weight[(oc * ipo + ci) * k + first_tap + f];
                let src = &frame[ic * hw..(ic + 1) * hw];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += wv * v;
                }
            }
        }
    }
    out
}

/// Offline temporal causal convolution of a `[T, C, H, W]` sequence with
/// `K - 1` zero frames of left padding.
pub fn temporal_causal_conv_offline(layer: &TemporalConv, seq: &FrameTensor) -> Result<FrameTensor> {
    let d = seq.dims();
    if d.len() != 4 || d[1] != layer.in_channels || d[0] == 0 {
        return Err(dim_mismatch(
            "temporal_causal_conv_offline",
            &[d.first().copied().unwrap_or(0), layer.in_channels, 0, 0],
            d,
        ));
    }
    let frames: Vec<&[f32]> = seq.data().chunks(d[1] * d[2] * d[3]).collect();
    let dims = [d[1], d[2], d[3]];
    let mut data = Vec::with_capacity(d[0] * layer.out_channels * d[2] * d[3]);
    for t in 0..d[0] {
        let lo = (t + 1).saturating_sub(layer.kernel);
        data.extend(temporal_step(layer, dims, &frames[lo..=t]));
    }
    Ok(FrameTensor::from_raw(
        vec![d[0], layer.out_channels, d[2], d[3]],
        data,
    ))
}

fn spatial(layer: &Layer, x: &[f32], input: [usize; 3], output: [usize; 3]) -> Vec<f32> {
    match layer {
        Layer::Conv2d(k) | Layer::DepthwiseConv2d(k) | Layer::PointwiseConv2d(k) => {
            conv2d(k, x, input, output)
        }
        _ => apply_layer(layer, &FrameTensor::from_raw(input.to_vec(), x.to_vec()))
            .expect("chain-checked")
            .into_data(),
    }
}

fn check_sequence(model: &ModelSpec, seq: &FrameTensor) -> Result<usize> {
    let d = seq.dims();
    let [c, h, w] = model.input_dims();
    if d.len() != 4 || d[1..] != [c, h, w] {
        return Err(dim_mismatch("model input sequence", &[0, c, h, w], d));
    }
    Ok(d[0])
}

/// Layer-major evaluation over a whole sequence. `probe` sees every
/// layer's outputs for all frames.
fn run_offline(
    model: &ModelSpec,
    seq: &FrameTensor,
    mut probe: impl FnMut(usize, &[Vec<f32>]),
) -> Result<Vec<FrameTensor>> {
    let t_len = check_sequence(model, seq)?;
    let frame_len: usize = model.input_dims().iter().product();
    let mut frames: Vec<Vec<f32>> = seq.data().chunks(frame_len).map(<[f32]>::to_vec).collect();
    for (i, layer) in model.layers().iter().enumerate() {
        let (din, dout) = (model.layer_input(i), model.layer_output(i));
        frames = match layer {
            Layer::TemporalCausalConv(tc) => (0..t_len)
                .map(|t| {
                    let lo = (t + 1).saturating_sub(tc.kernel);
                    let window: Vec<&[f32]> = frames[lo..=t].iter().map(Vec::as_slice).collect();
                    temporal_step(tc, din, &window)
                })
                .collect(),
            Layer::Gru(g) => {
                let mut h = vec![0.0f32; g.hidden_size];
                frames
                    .iter()
                    .map(|x| {
                        h = gru_cell(x, &h, g)?;
                        Ok(h.clone())
                    })
                    .collect::<Result<_>>()?
            }
            Layer::LtvSsm(s) => {
                let mut state = vec![0.0f32; s.d_model * s.d_state];
                frames
                    .iter()
                    .map(|u| {
                        let (y, next) = ltv_ssm_cell(u, &state, s)?;
                        state = next;
                        Ok(y)
                    })
                    .collect::<Result<_>>()?
            }
            _ => frames.iter().map(|x| spatial(layer, x, din, dout)).collect(),
        };
        probe(i, &frames);
    }
    let out = model.output_dims().to_vec();
    Ok(frames
        .into_iter()
        .map(|f| FrameTensor::from_raw(out.clone(), f))
        .collect())
}

/// Runs the model over a `[T, C, H, W]` sequence, returning one output per
/// frame. Recurrent layers start from zero state.
pub fn forward_offline(model: &ModelSpec, seq: &FrameTensor) -> Result<Vec<FrameTensor>> {
    run_offline(model, seq, |_, _| {})
}

#[derive(Debug, Clone, PartialEq)]
enum LayerState {
    Stateless,
    /// Last `K - 1` inputs, oldest first.
    Fifo(VecDeque<Vec<f32>>),
    Hidden(Vec<f32>),
}

/// Per-stream mutable state: a FIFO per temporal convolution and a hidden
/// vector per recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    layers: Vec<LayerState>,
    frames_seen: usize,
}

impl StreamState {
    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Current FIFO length of each temporal convolution, in layer order.
    pub fn fifo_lengths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerState::Fifo(q) => Some(q.len()),
                _ => None,
            })
            .collect()
    }

    /// Recurrent state vectors (GRU hidden or flattened SSM state), in
    /// layer order.
    pub fn hidden_states(&self) -> Vec<&[f32]> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerState::Hidden(h) => Some(h.as_slice()),
                _ => None,
            })
            .collect()
    }
}

pub fn stream_init(model: &ModelSpec) -> StreamState {
    let layers = model
        .layers()
        .iter()
        .map(|l| match l {
            Layer::TemporalCausalConv(_) => LayerState::Fifo(VecDeque::new()),
            Layer::Gru(g) => LayerState::Hidden(vec![0.0; g.hidden_size]),
            Layer::LtvSsm(s) => LayerState::Hidden(vec![0.0; s.d_model * s.d_state]),
            _ => LayerState::Stateless,
        })
        .collect();
    StreamState {
        layers,
        frames_seen: 0,
    }
}

/// Pushes one `[C, H, W]` frame through the model.
///
/// The output equals frame `t` of [`forward_offline`] over every frame
/// seen so far. Temporal convolutions take a dot product between their
/// FIFO contents plus the new frame and the kernel taps.
pub fn stream_step(model: &ModelSpec, state: &mut StreamState, frame: &FrameTensor) -> Result<FrameTensor> {
    let input = model.input_dims();
    if frame.dims() != input {
        return Err(dim_mismatch("stream_step frame", &input, frame.dims()));
    }
    if state.layers.len() != model.layers().len() {
        return Err(invalid("stream state does not belong to this model"));
    }
    let mut x = frame.data().to_vec();
    for (i, (layer, slot)) in model.layers().iter().zip(state.layers.iter_mut()).enumerate() {
        let (din, dout) = (model.layer_input(i), model.layer_output(i));
        x = match (layer, slot) {
            (Layer::TemporalCausalConv(tc), LayerState::Fifo(fifo)) => {
                let mut window: Vec<&[f32]> = fifo.iter().map(Vec::as_slice).collect();
                window.push(&x);
                let y = temporal_step(tc, din, &window);
                if tc.kernel > 1 {
                    fifo.push_back(x);
                    if fifo.len() > tc.kernel - 1 {
                        fifo.pop_front();
                    }
                }
                y
            }
            (Layer::Gru(g), LayerState::Hidden(h)) => {
                *h = gru_cell(&x, h, g)?;
                h.clone()
            }
            (Layer::LtvSsm(s), LayerState::Hidden(h)) => {
                let (y, next) = ltv_ssm_cell(&x, h, s)?;
                *h = next;
                y
            }
            (l, LayerState::Stateless) if !l.is_stateful() => spatial(l, &x, din, dout),
            _ => return Err(invalid("stream state does not belong to this model")),
        };
    }
    state.frames_seen += 1;
    Ok(FrameTensor::from_raw(model.output_dims().to_vec(), x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSparsity {
    pub layer: usize,
    pub zero_fraction: f64,
    pub elements: usize,
}

/// Exact-zero fraction of each ReLU output and the total L1 mass of those
/// activations over a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub layers: Vec<LayerSparsity>,
    pub l1: f64,
}

impl SparsityReport {
    pub fn overall_zero_fraction(&self) -> f64 {
        let n: usize = self.layers.iter().map(|l| l.elements).sum();
        if n == 0 {
            return 0.0;
        }
        self.layers
            .iter()
            .map(|l| l.zero_fraction * l.elements as f64)
            .sum::<f64>()
            / n as f64
    }
}

pub fn activation_sparsity(model: &ModelSpec, seq: &FrameTensor) -> Result<SparsityReport> {
    let mut report = SparsityReport {
        layers: Vec::new(),
        l1: 0.0,
    };
    run_offline(model, seq, |i, frames| {
        if !matches!(model.layers()[i], Layer::Relu) {
            return;
        }
        let (mut zeros, mut n) = (0usize, 0usize);
        for f in frames {
            zeros += f.iter().filter(|&&v| v == 0.0).count();
            n += f.len();
            report.l1 += f.iter().map(|&v| v.abs() as f64).sum::<f64>();
        }
        report.layers.push(LayerSparsity {
            layer: i,
            zero_fraction: if n == 0 { 0.0 } else { zeros as f64 / n as f64 },
            elements: n,
        });
    })?;
    Ok(report)
}

fn sigmoid(v: f32) -> f64 {
    1.0 / (1.0 + (-(v as f64)).exp())
}

/// Turns a model output into a pupil estimate on a `frame_w x frame_h`
/// frame according to the head.
pub fn decode_output(head: Head, out: &FrameTensor, frame_w: f64, frame_h: f64) -> Result<PupilPrediction> {
    match head {
        Head::None => Err(invalid("model has no prediction head")),
        Head::Grid { rows, cols } => {
            let n = rows * cols;
            if out.len() != 3 * n {
                return Err(dim_mismatch("grid head output", &[3, rows, cols], out.dims()));
            }
            let d = out.data();
            let g = GridPrediction::new(
                rows,
                cols,
                d[..n].iter().map(|&v| sigmoid(v)).collect(),
                d[n..2 * n].iter().map(|&v| sigmoid(v)).collect(),
                d[2 * n..].iter().map(|&v| sigmoid(v)).collect(),
            )?;
            Ok(grid_decode(&g, frame_w, frame_h))
        }
        Head::Regression => {
            if out.len() != 2 {
                return Err(dim_mismatch("regression head output", &[2], out.dims()));
            }
            let d = out.data();
            Ok(PupilPrediction {
                x: (d[0] as f64).clamp(0.0, 1.0) * frame_w,
                y: (d[1] as f64).clamp(0.0, 1.0) * frame_h,
                confidence: 1.0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tconv(k: usize, weight: Vec<f32>) -> TemporalConv {
        TemporalConv {
            in_channels: 1,
            out_channels: 1,
            kernel: k,
            depthwise: false,
            weight,
            bias: vec![0.0],
        }
    }

    fn seq(vals: &[f32]) -> FrameTensor {
        FrameTensor::new(vec![vals.len(), 1, 1, 1], vals.to_vec()).unwrap()
    }

    #[test]
    fn temporal_fixtures() {
        let x = seq(&[2.0, 3.0, 5.0]);
        let id = temporal_causal_conv_offline(&tconv(3, vec![0.0, 0.0, 1.0]), &x).unwrap();
        assert_eq!(id, x);
        let sum = temporal_causal_conv_offline(&tconv(2, vec![1.0, 1.0]), &seq(&[2.0, 3.0])).unwrap();
        assert_eq!(sum.data(), [2.0, 5.0]);
        let scale = temporal_causal_conv_offline(&tconv(1, vec![3.0]), &x).unwrap();
        assert_eq!(scale.data(), [6.0, 9.0, 15.0]);
    }

    #[test]
    fn stream_init_is_empty() {
        let m = ModelSpec::new(
            [1, 1, 1],
            vec![
                Layer::TemporalCausalConv(tconv(3, vec![1.0; 3])),
                Layer::Gru(super::super::GruParams::zeros(1, 4)),
            ],
            Head::None,
        )
        .unwrap();
        let s = stream_init(&m);
        assert_eq!(s.fifo_lengths(), [0]);
        assert_eq!(s.hidden_states(), [&[0.0f32; 4][..]]);
    }

    #[test]
    fn streaming_matches_offline_small() {
        let m = ModelSpec::new(
            [1, 1, 1],
            vec![Layer::TemporalCausalConv(tconv(3, vec![0.5, -1.0, 2.0])), Layer::Relu],
            Head::None,
        )
        .unwrap();
        let x = seq(&[1.0, -2.0, 3.0, 0.5, 4.0]);
        let offline = forward_offline(&m, &x).unwrap();
        let mut st = stream_init(&m);
        for (t, want) in offline.iter().enumerate() {
            assert_eq!(&stream_step(&m, &mut st, &x.frame(t)).unwrap(), want);
        }
        assert_eq!(st.fifo_lengths(), [2]);
        assert!(stream_step(&m, &mut st, &FrameTensor::zeros(&[2, 1, 1])).is_err());
    }

    #[test]
    fn sparsity_counts() {
        let m = ModelSpec::new([4, 1, 1], vec![Layer::Relu], Head::None).unwrap();
        let x = FrameTensor::new(vec![1, 4, 1, 1], vec![-1.0, 0.0, 2.0, 3.0]).unwrap();
        let r = activation_sparsity(&m, &x).unwrap();
        assert_eq!(r.layers[0].zero_fraction, 0.5);
        assert_eq!(r.l1, 5.0);
        let neg = FrameTensor::new(vec![1, 4, 1, 1], vec![-1.0; 4]).unwrap();
        assert_eq!(activation_sparsity(&m, &neg).unwrap().overall_zero_fraction(), 1.0);
        let pos = FrameTensor::new(vec![1, 4, 1, 1], vec![1.0; 4]).unwrap();
        assert_eq!(activation_sparsity(&m, &pos).unwrap().overall_zero_fraction(), 0.0);
    }

    #[test]
    fn empty_model_is_identity() {
        let m = ModelSpec::new([2, 2, 2], vec![], Head::None).unwrap();
        let x = FrameTensor::new(vec![2, 2, 2, 2], (0..16).map(|v| v as f32).collect()).unwrap();
        let out = forward_offline(&m, &x).unwrap();
        assert_eq!(out[1], x.frame(1));
    }
}
