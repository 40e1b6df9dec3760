use std::fmt;
use std::path::{Path, PathBuf};

use evgaze::events::make_windows;
use evgaze::represent::{
    bina_rep, causal_event_volume, direct_binning, downsample_coords, event_volume, memory_input, memory_update,
    time_surface, voxel_grid, BinCarry, BinnedVolume, MemoryState,
};
use evgaze::tensor::{decode_eett, encode_eett};
use evgaze::{EventStream, FrameTensor, Window};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{section, PipelineConfig, Representation};
use crate::error::{read_bytes, read_text, write_file, CliError, Result, EXIT_IO};

use super::load_events;

pub const MANIFEST_FORMAT: &str = "evgaze-represent";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Index of the tensor files written by `represent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentManifest {
    pub format: String,
    pub version: u32,
    pub representation: Representation,
    /// Sensor `[width, height]` the windows were cut from.
    pub sensor: [u16; 2],
    pub downsample: [u16; 2],
    /// `[C, H, W]` of every tensor file.
    pub frame: [usize; 3],
    pub window_us: u64,
    pub stride_us: u64,
    pub windows: Vec<WindowEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowEntry {
    pub index: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub events: usize,
    pub file: String,
    /// Causal volumes only: whether the previous window's carry was added.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carry_in: Option<bool>,
    /// Causal volumes only: whether this window deferred any mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carry_out: Option<bool>,
}

impl RepresentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: RepresentManifest = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::new(EXIT_IO, e.to_string()).in_file(path))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(CliError::new(EXIT_IO, "not a version 1 represent manifest").in_file(path));
        }
        Ok(m)
    }

    /// Loads every window tensor in order. Files are resolved next to the
    /// manifest.
    pub fn load_frames(&self, manifest_path: &Path) -> Result<Vec<FrameTensor>> {
        let dir = manifest_path.parent().unwrap_or(Path::new(""));
        self.windows
            .iter()
            .map(|w| {
                let path = dir.join(&w.file);
                decode_eett(&read_bytes(&path)?).map_err(|e| CliError::from(e).in_file(&path))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentSummary {
    pub manifest: PathBuf,
    pub windows: usize,
    pub frame: [usize; 3],
}

impl fmt::Display for RepresentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "windows={}", self.windows)?;
        writeln!(f, "frame={}x{}x{}", self.frame[0], self.frame[1], self.frame[2])?;
        writeln!(f, "manifest={}", self.manifest.display())
    }
}

/// `[T, C, H, W]` volumes become `[T * C, H, W]` frames, bin-major.
fn flatten(v: &BinnedVolume) -> FrameTensor {
    let [t, c, h, w] = v.dims();
    v.to_tensor().reshape(vec![t * c, h, w]).expect("same element count")
}

fn frame_dims(rep: &Representation, h: usize, w: usize) -> [usize; 3] {
    match *rep {
        Representation::DirectBinning { bins, polarity }
        | Representation::EventVolume { bins, polarity }
        | Representation::CausalEventVolume { bins, polarity, .. } => [bins * polarity.channels(), h, w],
        Representation::VoxelGrid { bins } => [bins, h, w],
        Representation::TimeSurface { .. } => [2, h, w],
        Representation::Memory { .. } => [3, h, w],
        Representation::BinaRep { .. } => [1, h, w],
    }
}

/// Representations whose windows do not depend on each other.
fn independent(s: &EventStream, w: Window, rep: &Representation) -> evgaze::Result<FrameTensor> {
    let (h, wd) = (s.height() as usize, s.width() as usize);
    match *rep {
        Representation::DirectBinning { bins, polarity } => Ok(flatten(&direct_binning(s, w, bins, polarity)?)),
        Representation::EventVolume { bins, polarity } => Ok(flatten(&event_volume(s, w, bins, polarity)?)),
        Representation::CausalEventVolume { bins, polarity, .. } => {
            Ok(flatten(&causal_event_volume(s, w, bins, polarity, None)?.0))
        }
        Representation::VoxelGrid { bins } => Ok(flatten(&voxel_grid(s, w, bins)?)),
        Representation::TimeSurface { decay } => {
            let (p, n) = time_surface(s, w, decay)?;
            FrameTensor::stack(&[p, n])
        }
        Representation::BinaRep { frames } => bina_rep(s, w, frames, h, wd),
        Representation::Memory { .. } => unreachable!("memory is sequential"),
    }
}

/// Cuts the events into windows and writes one EETT file per window plus
/// `manifest.json` into `out_dir`.
///
/// Causal volumes with `chain_carry` and the memory representation are
/// computed window by window; everything else runs on the worker pool.
/// Files are written in window order either way.
pub fn run(cfg: &PipelineConfig) -> Result<RepresentSummary> {
    let r = section(&cfg.represent, "represent")?;
    let stride = r.stride_us.unwrap_or(r.window_us);
    let [fx, fy] = r.downsample;
    let raw = load_events(cfg, &cfg.resolve(&r.events))?;
    let stream = downsample_coords(&raw, fx, fy)?;
    let duration = r.duration_us.unwrap_or(stream.duration_us());
    let windows = make_windows(duration, r.window_us, stride)?;
    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let rep = r.representation;

    let chained = matches!(rep, Representation::CausalEventVolume { chain_carry: true, .. });
    if chained && stride != r.window_us {
        return Err(CliError::config("carry chaining needs stride_us == window_us"));
    }
    let mut carry_flags = Vec::new();
    let frames: Vec<FrameTensor> = match rep {
        Representation::CausalEventVolume {
            bins,
            polarity,
            chain_carry: true,
        } => {
            let mut carry: Option<BinCarry> = None;
            let mut out = Vec::with_capacity(windows.len());
            for &win in &windows {
                let (vol, next) = causal_event_volume(&stream, win, bins, polarity, carry.as_ref())?;
                carry_flags.push((carry.is_some(), !next.is_zero()));
                out.push(flatten(&vol));
                carry = Some(next);
            }
            out
        }
        Representation::Memory { decay, forgetting } => {
            let mut state = MemoryState::new(h, w, forgetting)?;
            let mut out = Vec::with_capacity(windows.len());
            for &win in &windows {
                let (p, n) = time_surface(&stream, win, decay)?;
                state = memory_update(&state, &p, &n)?;
                out.push(memory_input(&state));
            }
            out
        }
        _ => windows
            .par_iter()
            .map(|&win| independent(&stream, win, &rep))
            .collect::<evgaze::Result<_>>()?,
    };

    let out_dir = cfg.resolve(&r.out_dir);
    let mut entries = Vec::with_capacity(windows.len());
    for (i, (win, frame)) in windows.iter().zip(&frames).enumerate() {
        let file = format!("window_{i:06}.eett");
        write_file(&out_dir.join(&file), encode_eett(frame))?;
        let (carry_in, carry_out) = match (&rep, carry_flags.get(i)) {
            (Representation::CausalEventVolume { .. }, Some(&(a, b))) => (Some(a), Some(b)),
            (Representation::CausalEventVolume { .. }, None) => (Some(false), None),
            _ => (None, None),
        };
        entries.push(WindowEntry {
            index: i,
            t_start: win.t_start,
            t_end: win.t_end,
            events: stream.slice_window(*win).len(),
            file,
            carry_in,
            carry_out,
        });
    }
    let frame = frame_dims(&rep, h, w);
    let manifest = RepresentManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        representation: rep,
        sensor: [cfg.sensor.width, cfg.sensor.height],
        downsample: r.downsample,
        frame,
        window_us: r.window_us,
        stride_us: stride,
        windows: entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&path, json + "\n")?;
    Ok(RepresentSummary {
        manifest: path,
        windows: windows.len(),
        frame,
    })
}
