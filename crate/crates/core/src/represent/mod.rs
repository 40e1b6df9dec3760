//! Dense representations of event windows.

mod binning;
mod surface;

pub use binning::{
    causal_event_volume, direct_binning, event_volume, voxel_grid, BinCarry, BinnedVolume,
    PolarityMode,
};
pub use surface::{
    averaged_surface, memory_input, memory_update, time_surface, Decay, MemoryState,
    DEFAULT_FORGETTING,
};

use crate::error::{invalid, Result};
use crate::events::{Event, EventStream, Window};
use crate::tensor::FrameTensor;

/// Integer-divides coordinates; sensor dims are divided rounding up.
pub fn downsample_coords(stream: &EventStream, factor_x: u16, factor_y: u16) -> Result<EventStream> {
    if factor_x == 0 || factor_y == 0 {
        return Err(invalid("downsample factors must be at least 1"));
    }
    let events = stream
        .events()
        .iter()
        .map(|e| Event {
            x: e.x / factor_x,
            y: e.y / factor_y,
            ..*e
        })
        .collect();
    Ok(EventStream::from_parts_unchecked(
        stream.width().div_ceil(factor_x),
        stream.height().div_ceil(factor_y),
        events,
    ))
}

/// Binary bit-stacked map of `n_frames` sub-windows, shaped `[1, H, W]`.
///
/// A pixel's bit for sub-window `j` is set when it saw at least one event
/// there. The newest sub-window is the most significant bit and the packed
/// integer is divided by `2^n - 1`, so values lie in `[0, 1]`. Events
/// outside `height x width` are ignored.
pub fn bina_rep(
    stream: &EventStream,
    w: Window,
    n_frames: u32,
    height: usize,
    width: usize,
) -> Result<FrameTensor> {
    if !(1..=24).contains(&n_frames) {
        return Err(invalid("bina-rep needs 1..=24 frames"));
    }
    let span = w.span_us();
    let mut bits = vec![0u32; height * width];
    for e in stream.events().iter().filter(|e| w.contains(e.t)) {
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= width || y >= height {
            continue;
        }
        let j = ((e.t - w.t_start) * n_frames as u64 / span) as u32;
        bits[y * width + x] |= 1 << j;
    }
    let full = ((1u64 << n_frames) - 1) as f64;
    Ok(FrameTensor::from_raw(
        vec![1, height, width],
        bits.into_iter().map(|b| (b as f64 / full) as f32).collect(),
    ))
}
