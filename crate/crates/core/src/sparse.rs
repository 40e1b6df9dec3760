//! Submanifold sparse convolution.
//!
//! Event frames are mostly zero. A [`SparseFrame`] stores only the active
//! sites (pixels where any channel is nonzero) and their feature vectors.
//! Submanifold convolution evaluates outputs only at those sites and reads
//! inactive neighbours as zero, so the active set never grows from layer to
//! layer.

use std::collections::HashMap;

use crate::error::{dim_mismatch, invalid, Result};
use crate::nn::{stream_init, stream_step, BatchNorm, Conv2d, Layer, ModelSpec, StreamState};
use crate::tensor::FrameTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFrame {
    dims: [usize; 3],
    sites: Vec<(usize, usize)>,
    /// `sites.len() * C`, one C-vector per site.
    features: Vec<f32>,
}

impl SparseFrame {
    /// Sites must be unique and sorted by `(y, x)`, inside the frame, with
    /// `C` features each.
    pub fn new(dims: [usize; 3], sites: Vec<(usize, usize)>, features: Vec<f32>) -> Result<Self> {
        let [c, h, w] = dims;
        if features.len() != sites.len() * c {
            return Err(dim_mismatch("sparse features", &[sites.len() * c], &[features.len()]));
        }
        if sites.windows(2).any(|p| p[0] >= p[1]) {
            return Err(invalid("sparse sites must be unique and sorted by (y, x)"));
        }
        if sites.iter().any(|&(y, x)| y >= h || x >= w) {
            return Err(invalid("sparse site outside the frame"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sparse features must be finite"));
        }
        Ok(SparseFrame { dims, sites, features })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        SparseFrame {
            dims,
            sites: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn sites(&self) -> &[(usize, usize)] {
        &self.sites
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        let c = self.dims[0];
        &self.features[i * c..(i + 1) * c]
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Fraction of pixels that are inactive.
    pub fn sparsity(&self) -> f64 {
        let px = self.dims[1] * self.dims[2];
        if px == 0 {
            return 1.0;
        }
        1.0 - self.sites.len() as f64 / px as f64
    }
}

pub fn to_sparse(frame: &FrameTensor) -> Result<SparseFrame> {
    let dims: [usize; 3] = frame
        .dims()
        .try_into()
        .map_err(|_| dim_mismatch("to_sparse", &[0, 0, 0], frame.dims()))?;
    let [c, h, w] = dims;
    let plane = h * w;
    let x = frame.data();
    let mut sites = Vec::new();
    let mut features = Vec::new();
    for p in 0..plane {
        if (0..c).any(|ch| x[ch * plane + p] != 0.0) {
            sites.push((p / w, p % w));
            features.extend((0..c).map(|ch| x[ch * plane + p]));
        }
    }
    Ok(SparseFrame { dims, sites, features })
}

pub fn densify(sf: &SparseFrame) -> FrameTensor {
    let [c, h, w] = sf.dims;
    let plane = h * w;
    let mut data = vec![0.0f32; c * plane];
    for (i, &(y, x)) in sf.sites.iter().enumerate() {
        for (ch, &v) in sf.feature(i).iter().enumerate() {
            data[ch * plane + y * w + x] = v;
        }
    }
    FrameTensor::from_raw(sf.dims.to_vec(), data)
}

/// Submanifold convolution with a `[C', C, Kh, Kw]` kernel and odd kernel
/// dims, centred on each active site.
pub fn submanifold_conv(sf: &SparseFrame, kernel: &FrameTensor, bias: &[f32]) -> Result<SparseFrame> {
    submanifold_conv_counted(sf, kernel, bias).map(|(out, _)| out)
}

/// As [`submanifold_conv`], also returning the number of kernel taps that
/// were evaluated (active, in-bounds neighbours). This never exceeds
/// `active sites * Kh * Kw`.
pub fn submanifold_conv_counted(sf: &SparseFrame, kernel: &FrameTensor, bias: &[f32]) -> Result<(SparseFrame, u64)> {
    let kd: [usize; 4] = kernel
        .dims()
        .try_into()
        .map_err(|_| dim_mismatch("submanifold kernel", &[0, 0, 0, 0], kernel.dims()))?;
    grouped(sf, kernel.data(), kd, 1, bias)
}

/// Runs a stride-1 `Conv2d` (plain, depthwise or pointwise) as a
/// submanifold convolution.
pub fn submanifold_layer(sf: &SparseFrame, k: &Conv2d) -> Result<(SparseFrame, u64)> {
    if k.stride != 1 {
        return Err(invalid("submanifold convolution needs stride 1"));
    }
    let kd = [k.out_channels, k.in_channels / k.groups, k.kernel_h, k.kernel_w];
    grouped(sf, &k.weight, kd, k.groups, &k.bias)
}

fn grouped(
    sf: &SparseFrame,
    weight: &[f32],
    [oc_n, icg, kh, kw]: [usize; 4],
    groups: usize,
    bias: &[f32],
) -> Result<(SparseFrame, u64)> {
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(invalid(format!("submanifold kernel must be odd, got {kh}x{kw}")));
    }
    let [c, h, w] = sf.dims;
    if icg * groups != c || oc_n % groups != 0 {
        return Err(dim_mismatch("submanifold kernel", &[oc_n, c / groups.max(1), kh, kw], &[oc_n, icg, kh, kw]));
    }
    if bias.len() != oc_n {
        return Err(dim_mismatch("submanifold bias", &[oc_n], &[bias.len()]));
    }
    let ocg = oc_n / groups;
    let index: HashMap<(usize, usize), usize> = sf.sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let (ry, rx) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut features = Vec::with_capacity(sf.sites.len() * oc_n);
    let mut taps = 0u64;
    let mut neighbours: Vec<(usize, usize, usize)> = Vec::with_capacity(kh * kw);
    for &(y, x) in &sf.sites {
        neighbours.clear();
        for ky in 0..kh {
            let ny = y as isize + ky as isize - ry;
            if ny < 0 || ny >= h as isize {
                continue;
            }
            for kx in 0..kw {
                let nx = x as isize + kx as isize - rx;
                if nx < 0 || nx >= w as isize {
                    continue;
                }
                if let Some(&j) = index.get(&(ny as usize, nx as usize)) {
                    neighbours.push((ky, kx, j));
                }
            }
        }
        taps += neighbours.len() as u64;
        for oc in 0..oc_n {
            let g = oc / ocg;
            let mut acc = bias[oc];
            for &(ky, kx, j) in &neighbours {
                let f = &sf.features[j * c + g * icg..j * c + (g + 1) * icg];
                for (ci, &v) in f.iter().enumerate() {
                    acc += weight[((oc * icg + ci) * kh + ky) * kw + kx] * v;
                }
            }
            features.push(acc);
        }
    }
    Ok((
        SparseFrame {
            dims: [oc_n, h, w],
            sites: sf.sites.clone(),
            features,
        },
        taps,
    ))
}

/// Per-site function for [`sparse_pointwise`].
#[derive(Debug, Clone, PartialEq)]
pub enum Pointwise {
    /// `v * scale[c] + shift[c]`
    Affine { scale: Vec<f32>, shift: Vec<f32> },
    Relu,
}

impl Pointwise {
    /// Folds inference batch normalization into a per-channel affine map.
    pub fn from_batchnorm(b: &BatchNorm) -> Self {
        let scale: Vec<f32> = (0..b.channels())
            .map(|c| b.gamma[c] / (b.var[c] + b.eps).sqrt())
            .collect();
        let shift = (0..b.channels()).map(|c| b.beta[c] - b.mean[c] * scale[c]).collect();
        Pointwise::Affine { scale, shift }
    }
}

pub fn sparse_pointwise(sf: &SparseFrame, f: &Pointwise) -> Result<SparseFrame> {
    let c = sf.dims[0];
    let features = match f {
        Pointwise::Relu => sf.features.iter().map(|v| v.max(0.0)).collect(),
        Pointwise::Affine { scale, shift } => {
            if scale.len() != c || shift.len() != c {
                return Err(dim_mismatch("sparse affine", &[c], &[scale.len(), shift.len()]));
            }
            sf.features
                .iter()
                .enumerate()
                .map(|(i, &v)| v * scale[i % c] + shift[i % c])
                .collect()
        }
    };
    Ok(SparseFrame {
        dims: sf.dims,
        sites: sf.sites.clone(),
        features,
    })
}

fn sparse_capable(layer: &Layer) -> bool {
    match layer {
        Layer::Conv2d(k) | Layer::DepthwiseConv2d(k) | Layer::PointwiseConv2d(k) => {
            k.stride == 1
                && k.kernel_h % 2 == 1
                && k.kernel_w % 2 == 1
                && k.padding == k.kernel_h / 2
                && k.kernel_h == k.kernel_w
        }
        Layer::BatchNorm(_) | Layer::Relu => true,
        _ => false,
    }
}

/// Streaming executor that runs the model's leading stride-1 convolution,
/// normalization and activation layers on sparse frames, then densifies and
/// hands the rest of the model to the dense streaming engine.
///
/// Submanifold layers only produce outputs at input-active sites, so the
/// result differs from dense execution whenever a convolution would have
/// spread activity; this is the usual trade of submanifold networks.
#[derive(Debug, Clone)]
pub struct SparseStreamer {
    prefix: Vec<Layer>,
    suffix: ModelSpec,
    state: StreamState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SparseStepStats {
    /// Kernel taps evaluated in the sparse prefix, times channel pairs.
    pub macs: u64,
    pub active_sites: usize,
}

impl SparseStreamer {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let n = model.layers().iter().take_while(|l| sparse_capable(l)).count();
        let mid = if n == 0 { model.input_dims() } else { model.layer_output(n - 1) };
        let suffix = ModelSpec::new(mid, model.layers()[n..].to_vec(), model.head())?;
        let state = stream_init(&suffix);
        Ok(SparseStreamer {
            prefix: model.layers()[..n].to_vec(),
            suffix,
            state,
        })
    }

    /// Number of leading layers executed sparsely.
    pub fn sparse_layers(&self) -> usize {
        self.prefix.len()
    }

    pub fn step(&mut self, frame: &FrameTensor) -> Result<(FrameTensor, SparseStepStats)> {
        let mut sf = to_sparse(frame)?;
        let mut stats = SparseStepStats {
            macs: 0,
            active_sites: sf.len(),
        };
        for layer in &self.prefix {
            sf = match layer {
                Layer::Conv2d(k) | Layer::DepthwiseConv2d(k) | Layer::PointwiseConv2d(k) => {
                    let (out, taps) = submanifold_layer(&sf, k)?;
                    stats.macs += taps * (k.out_channels * k.in_channels / k.groups) as u64;
                    out
                }
                Layer::BatchNorm(b) => sparse_pointwise(&sf, &Pointwise::from_batchnorm(b))?,
                _ => sparse_pointwise(&sf, &Pointwise::Relu)?,
            };
        }
        let out = stream_step(&self.suffix, &mut self.state, &densify(&sf))?;
        Ok((out, stats))
    }

    /// Dense MACs of the suffix; the prefix is counted per step.
    pub fn suffix_macs(&self) -> u64 {
        self.suffix.macs_per_frame()
    }
}
