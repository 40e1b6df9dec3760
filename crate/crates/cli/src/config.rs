//! The JSON pipeline configuration shared by every subcommand.
//!
//! One file describes a whole pipeline; each subcommand reads its own
//! section and fails with a config error when that section is missing.
//! Relative paths are resolved against the directory holding the config
//! file, so a config and its data can move together.

use std::path::{Path, PathBuf};

use evgaze::augment::{AffineParams, CutoutMask, EdgePolicy};
use evgaze::metrics::LABEL_RATE_HZ;
use evgaze::represent::{Decay, PolarityMode, DEFAULT_FORGETTING};
use evgaze::sim::{SceneSpec, TrajectorySpec, DEFAULT_W_REF};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{read_text, CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sensor: Sensor,
    #[serde(default = "default_label_rate")]
    pub label_rate_hz: f64,
    pub generate: Option<GenerateConfig>,
    pub augment: Option<AugmentConfig>,
    pub represent: Option<RepresentConfig>,
    pub infer: Option<InferConfig>,
    pub track: Option<TrackConfig>,
    pub eval: Option<EvalConfig>,
    pub bench: Option<BenchConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_label_rate() -> f64 {
    LABEL_RATE_HZ
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensor {
    pub width: u16,
    pub height: u16,
}

impl Default for Sensor {
    fn default() -> Self {
        Sensor {
            width: 640,
            height: 480,
        }
    }
}

/// Trajectory and scene are kept as raw JSON so that the sensor dims and
/// the run seed can fill in whatever the file leaves out.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "empty_object")]
    pub trajectory: Value,
    #[serde(default = "empty_object")]
    pub scene: Value,
    pub events: PathBuf,
    pub labels: PathBuf,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub events: PathBuf,
    pub output: PathBuf,
    pub ops: Vec<AugmentOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentOp {
    FlipH {},
    Shift {
        dx: i32,
        dy: i32,
        #[serde(default = "default_edge")]
        edge: EdgePolicy,
    },
    TemporalFlip {},
    /// Shift inside `[0, duration)` of the input stream.
    TemporalShift { dt_us: i64 },
    Affine(AffineParams),
    /// Uniform draws in `[-max, max]` for rotation, log-scale and
    /// translation; flips with the given probabilities.
    RandomAffine {
        #[serde(default)]
        max_rotation: f64,
        #[serde(default)]
        max_log_scale: f64,
        #[serde(default)]
        max_translate_px: f64,
        #[serde(default)]
        p_time_flip: f64,
        #[serde(default)]
        p_polarity_flip: f64,
    },
    Cutout(CutoutMask),
    /// A `w x h` mask placed uniformly on the sensor.
    RandomCutout { w: u32, h: u32 },
}

fn default_edge() -> EdgePolicy {
    EdgePolicy::Drop
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentConfig {
    pub events: PathBuf,
    pub out_dir: PathBuf,
    pub window_us: u64,
    /// Defaults to `window_us`.
    pub stride_us: Option<u64>,
    /// Span to tile; defaults to the event stream's own duration.
    pub duration_us: Option<u64>,
    /// Integer coordinate division factors `[x, y]`.
    #[serde(default = "unit_factor")]
    pub downsample: [u16; 2],
    pub representation: Representation,
}

fn unit_factor() -> [u16; 2] {
    [1, 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Representation {
    DirectBinning {
        bins: usize,
        polarity: PolarityMode,
    },
    EventVolume {
        bins: usize,
        polarity: PolarityMode,
    },
    CausalEventVolume {
        bins: usize,
        polarity: PolarityMode,
        /// Feed each window's carry into the next; needs adjacent windows.
        #[serde(default = "yes")]
        chain_carry: bool,
    },
    VoxelGrid {
        bins: usize,
    },
    TimeSurface {
        decay: Decay,
    },
    Memory {
        decay: Decay,
        #[serde(default = "default_forgetting")]
        forgetting: [f64; 3],
    },
    BinaRep {
        frames: u32,
    },
}

fn yes() -> bool {
    true
}

fn default_forgetting() -> [f64; 3] {
    DEFAULT_FORGETTING
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferConfig {
    /// Manifest written by `represent`.
    pub manifest: PathBuf,
    pub weights: PathBuf,
    /// Predict at these label times; without labels, one row per frame.
    pub labels: Option<PathBuf>,
    pub predictions: PathBuf,
    #[serde(default)]
    pub offline: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub events: PathBuf,
    pub labels: PathBuf,
    pub predictions: PathBuf,
    #[serde(default = "default_tau")]
    pub tau_s: f64,
    #[serde(default = "default_w_ref")]
    pub w_ref: f64,
}

fn default_tau() -> f64 {
    0.05
}

fn default_w_ref() -> f64 {
    DEFAULT_W_REF
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub predictions: PathBuf,
    pub labels: PathBuf,
    /// JSON report destination.
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub exclude_blinks: bool,
    pub min_p10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Weights manifest; the built-in representative model when absent.
    pub weights: Option<PathBuf>,
    /// Frames from a `represent` manifest instead of synthetic ones.
    pub manifest: Option<PathBuf>,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// Fraction of active sites in synthetic frames.
    #[serde(default = "default_density")]
    pub density: f64,
    pub report: Option<PathBuf>,
}

fn default_frames() -> usize {
    200
}

fn default_warmup() -> usize {
    20
}

fn default_density() -> f64 {
    0.05
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base).map_err(|e| e.in_file(path))
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        if cfg.sensor.width == 0 || cfg.sensor.height == 0 {
            return Err(CliError::config("sensor dims must be non-zero"));
        }
        if !(cfg.label_rate_hz > 0.0 && cfg.label_rate_hz.is_finite()) {
            return Err(CliError::config("label_rate_hz must be positive"));
        }
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The trajectory with the run seed and sensor-derived center and
    /// extent filled in where the config is silent.
    pub fn trajectory_spec(&self, g: &GenerateConfig) -> Result<TrajectorySpec> {
        let (w, h) = (self.sensor.width as f64, self.sensor.height as f64);
        let value = with_defaults(
            &g.trajectory,
            "trajectory",
            [
                ("seed", Value::from(self.seed)),
                ("center", Value::from(vec![w / 2.0, h / 2.0])),
                ("extent", Value::from(vec![w, h])),
            ],
        )?;
        let spec: TrajectorySpec =
            serde_json::from_value(value).map_err(|e| CliError::config(format!("trajectory: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// The scene on this config's sensor. The jitter seed defaults to the
    /// run seed plus one so it does not replay the trajectory's draws.
    pub fn scene_spec(&self, g: &GenerateConfig) -> Result<SceneSpec> {
        let value = with_defaults(
            &g.scene,
            "scene",
            [
                ("width", Value::from(self.sensor.width)),
                ("height", Value::from(self.sensor.height)),
                ("seed", Value::from(self.seed.wrapping_add(1))),
            ],
        )?;
        let spec: SceneSpec = serde_json::from_value(value).map_err(|e| CliError::config(format!("scene: {e}")))?;
        if (spec.width, spec.height) != (self.sensor.width, self.sensor.height) {
            return Err(CliError::config("scene dims must match the sensor"));
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn with_defaults<const N: usize>(v: &Value, what: &str, defaults: [(&str, Value); N]) -> Result<Value> {
    let Value::Object(map) = v else {
        return Err(CliError::config(format!("{what} must be a JSON object")));
    };
    let mut map = map.clone();
    for (k, d) in defaults {
        map.entry(k).or_insert(d);
    }
    Ok(Value::Object(map))
}

/// Section accessor with a uniform error message.
pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| CliError::config(format!("config has no `{name}` section")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<PipelineConfig> {
        PipelineConfig::from_json(s, Path::new("/base"))
    }

    #[test]
    fn minimal_config() {
        let c = parse(r#"{"version": 1}"#).unwrap();
        assert_eq!(c.sensor, Sensor::default());
        assert_eq!(c.label_rate_hz, 100.0);
        assert_eq!(c.resolve(Path::new("a/b.csv")), Path::new("/base/a/b.csv"));
        assert_eq!(c.resolve(Path::new("/abs.csv")), Path::new("/abs.csv"));
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert_eq!(parse(r#"{"version": 1, "extra": 0}"#).unwrap_err().code, 1);
        assert_eq!(parse(r#"{"version": 2}"#).unwrap_err().code, 1);
        assert_eq!(parse(r#"{}"#).unwrap_err().code, 1);
        let bad_op = r#"{"version": 1, "augment": {"events": "e", "output": "o", "ops": [{"op": "flip_h", "x": 1}]}}"#;
        assert_eq!(parse(bad_op).unwrap_err().code, 1);
    }

    #[test]
    fn generate_defaults_follow_sensor_and_seed() {
        let c = parse(
            r#"{"version": 1, "seed": 9, "sensor": {"width": 64, "height": 40},
                "generate": {"trajectory": {"kind": "smooth_pursuit"}, "events": "e.csv", "labels": "l.csv"}}"#,
        )
        .unwrap();
        let g = c.generate.as_ref().unwrap();
        let t = c.trajectory_spec(g).unwrap();
        assert_eq!((t.seed, t.center, t.extent), (9, [32.0, 20.0], [64.0, 40.0]));
        let s = c.scene_spec(g);
        // default radius 20 does not fit a 40-pixel-high sensor
        assert_eq!(s.unwrap_err().code, 1);
    }

    #[test]
    fn augment_ops_parse() {
        let ops: Vec<AugmentOp> = serde_json::from_str(
            r#"[{"op": "flip_h"}, {"op": "shift", "dx": 1, "dy": -2},
                {"op": "affine", "rotation": 0.1}, {"op": "cutout", "x0": 1, "y0": 2, "w": 3, "h": 4},
                {"op": "random_affine", "max_rotation": 0.2}]"#,
        )
        .unwrap();
        assert_eq!(ops.len(), 5);
        assert!(matches!(ops[1], AugmentOp::Shift { edge: EdgePolicy::Drop, .. }));
        assert!(matches!(ops[2], AugmentOp::Affine(p) if p.rotation == 0.1 && p.scale_x == 1.0));
    }
}
