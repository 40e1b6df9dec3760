//! Temporal binning of events into `[T, C, H, W]` volumes.
//!
//! All three binning schemes accumulate exact rational mass: each cell
//! holds an integer numerator over a per-volume denominator. Fractions are
//! derived from integer microsecond offsets, so conservation and causality
//! can be checked without float tolerance. [`BinnedVolume::to_tensor`]
//! produces the float32 view.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::events::{Event, EventStream, Window};
use crate::tensor::FrameTensor;

/// How event polarity maps onto channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityMode {
    /// One channel, ON adds +1 and OFF adds -1.
    Signed,
    /// Channel 0 counts ON events, channel 1 counts OFF events.
    TwoChannel,
    /// One channel counting all events.
    Merged,
}

impl PolarityMode {
    pub fn channels(self) -> usize {
        match self {
            PolarityMode::TwoChannel => 2,
            _ => 1,
        }
    }

    fn route(self, e: &Event) -> (usize, i64) {
        match self {
            PolarityMode::Signed => (0, if e.p { 1 } else { -1 }),
            PolarityMode::TwoChannel => (if e.p { 0 } else { 1 }, 1),
            PolarityMode::Merged => (0, 1),
        }
    }
}

/// Exact `[T, C, H, W]` accumulation: value = `numer / denom`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinnedVolume {
    dims: [usize; 4],
    numer: Vec<i64>,
    denom: u64,
}

impl BinnedVolume {
    fn zeros(t: usize, c: usize, h: usize, w: usize, denom: u64) -> Self {
        BinnedVolume {
            dims: [t, c, h, w],
            numer: vec![0; t * c * h * w],
            denom,
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn numerators(&self) -> &[i64] {
        &self.numer
    }

    pub fn denominator(&self) -> u64 {
        self.denom
    }

    /// Sum of all cells as an exact fraction `(numerator, denominator)`.
    pub fn total(&self) -> (i128, u64) {
        (self.numer.iter().map(|&v| v as i128).sum(), self.denom)
    }

    fn idx(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, nc, h, w] = self.dims;
        ((t * nc + c) * h + y) * w + x
    }

    fn rescale(&mut self, factor: u64) {
        if factor != 1 {
            self.numer.iter_mut().for_each(|v| *v *= factor as i64);
            self.denom *= factor;
        }
    }

    pub fn to_tensor(&self) -> FrameTensor {
        let d = self.denom as f64;
        FrameTensor::from_raw(
            self.dims.to_vec(),
            self.numer.iter().map(|&n| (n as f64 / d) as f32).collect(),
        )
    }
}

/// Mass deferred past the last bin of a causal volume, to be added to bin 0
/// of the next window. Signed in [`PolarityMode::Signed`], non-negative
/// otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinCarry {
    dims: [usize; 3],
    numer: Vec<i64>,
    denom: u64,
}

impl BinCarry {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn numerators(&self) -> &[i64] {
        &self.numer
    }

    pub fn denominator(&self) -> u64 {
        self.denom
    }

    pub fn total(&self) -> (i128, u64) {
        (self.numer.iter().map(|&v| v as i128).sum(), self.denom)
    }

    pub fn is_zero(&self) -> bool {
        self.numer.iter().all(|&v| v == 0)
    }

    /// The carried mass as a `[C, H, W]` tensor.
    pub fn plane(&self) -> FrameTensor {
        let d = self.denom as f64;
        FrameTensor::from_raw(
            self.dims.to_vec(),
            self.numer.iter().map(|&n| (n as f64 / d) as f32).collect(),
        )
    }
}

fn check(w: Window, t_bins: usize) -> Result<u64> {
    if t_bins == 0 {
        return Err(invalid("t_bins must be at least 1"));
    }
    Ok(w.span_us())
}

fn in_window(stream: &EventStream, w: Window) -> impl Iterator<Item = &Event> {
    stream.events().iter().filter(move |e| w.contains(e.t))
}

fn new_volume(stream: &EventStream, t_bins: usize, mode: PolarityMode, denom: u64) -> BinnedVolume {
    BinnedVolume::zeros(
        t_bins,
        mode.channels(),
        stream.height() as usize,
        stream.width() as usize,
        denom,
    )
}

/// Hard assignment: each event adds its full mass to bin
/// `floor((t - t_start) / bin_width)`.
pub fn direct_binning(
    stream: &EventStream,
    w: Window,
    t_bins: usize,
    mode: PolarityMode,
) -> Result<BinnedVolume> {
    let span = check(w, t_bins)?;
    let mut vol = new_volume(stream, t_bins, mode, 1);
    for e in in_window(stream, w) {
        let k = ((e.t - w.t_start) * t_bins as u64 / span) as usize;
        let (c, s) = mode.route(e);
        let i = vol.idx(k, c, e.y as usize, e.x as usize);
        vol.numer[i] += s;
    }
    Ok(vol)
}

/// Bilinear-in-time splat with bin centers at `k + 0.5` bin widths.
///
/// With `tau = (t - t_start) / bin_width - 0.5`, bin `k` receives
/// `max(0, 1 - |tau - k|)`. Weight falling before bin 0 or after bin `T-1`
/// is folded into the edge bin, so every event contributes exactly its
/// unit mass. Because an event splats backwards into the previous bin, bin
/// `k` depends on events up to half a bin past its end.
pub fn event_volume(
    stream: &EventStream,
    w: Window,
    t_bins: usize,
    mode: PolarityMode,
) -> Result<BinnedVolume> {
    let span = check(w, t_bins)?;
    // tau in units of 1/(2*span) bin widths
    let denom = 2 * span;
    let mut vol = new_volume(stream, t_bins, mode, denom);
    let last = t_bins as i64 - 1;
    for e in in_window(stream, w) {
        let tau = 2 * ((e.t - w.t_start) * t_bins as u64) as i64 - span as i64;
        let k0 = tau.div_euclid(denom as i64);
        let r = tau.rem_euclid(denom as i64);
        let (c, s) = mode.route(e);
        let (y, x) = (e.y as usize, e.x as usize);
        for (k, weight) in [(k0, denom as i64 - r), (k0 + 1, r)] {
            if weight == 0 {
                continue;
            }
            let i = vol.idx(k.clamp(0, last) as usize, c, y, x);
            vol.numer[i] += s * weight;
        }
    }
    Ok(vol)
}

/// Causal linear split: an event at fraction `u` through bin `k` gives
/// `1 - u` to bin `k` and `u` to bin `k + 1`.
///
/// Mass destined past the last bin is returned as the carry, and
/// `carry_in` is added to bin 0. Bin `k` never depends on events after the
/// end of bin `k`, and chaining carries across adjacent windows reproduces
/// binning the concatenated window.
pub fn causal_event_volume(
    stream: &EventStream,
    w: Window,
    t_bins: usize,
    mode: PolarityMode,
    carry_in: Option<&BinCarry>,
) -> Result<(BinnedVolume, BinCarry)> {
    let span = check(w, t_bins)?;
    let (h, wd, nc) = (stream.height() as usize, stream.width() as usize, mode.channels());
    let mut vol = new_volume(stream, t_bins, mode, span);
    let mut carry = BinCarry {
        dims: [nc, h, wd],
        numer: vec![0; nc * h * wd],
        denom: span,
    };

    let mut carry_in = carry_in.cloned();
    if let Some(ci) = carry_in.as_mut() {
        if ci.dims != carry.dims {
            return Err(crate::error::dim_mismatch(
                "causal_event_volume carry",
                &carry.dims,
                &ci.dims,
            ));
        }
        let common = lcm(ci.denom, span);
        vol.rescale(common / span);
        carry.numer.iter_mut().for_each(|v| *v *= (common / span) as i64);
        carry.denom = common;
        let f = (common / ci.denom) as i64;
        ci.numer.iter_mut().for_each(|v| *v *= f);
        ci.denom = common;
    }
    let unit = (vol.denom / span) as i64;

    for e in in_window(stream, w) {
        let pos = (e.t - w.t_start) * t_bins as u64;
        let k = (pos / span) as usize;
        let r = (pos % span) as i64 * unit;
        let whole = span as i64 * unit;
        let (c, s) = mode.route(e);
        let (y, x) = (e.y as usize, e.x as usize);
        let i = vol.idx(k, c, y, x);
        vol.numer[i] += s * (whole - r);
        if r != 0 {
            if k + 1 < t_bins {
                let i = vol.idx(k + 1, c, y, x);
                vol.numer[i] += s * r;
            } else {
                carry.numer[(c * h + y) * wd + x] += s * r;
            }
        }
    }
    if let Some(ci) = carry_in {
        for (i, v) in ci.numer.iter().enumerate() {
            vol.numer[i] += v;
        }
    }
    Ok((vol, carry))
}

/// Signed event volume with `t_bins` steps, shaped `[T, 1, H, W]`.
pub fn voxel_grid(stream: &EventStream, w: Window, t_bins: usize) -> Result<BinnedVolume> {
    event_volume(stream, w, t_bins, PolarityMode::Signed)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
