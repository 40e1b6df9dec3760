use std::fmt;
use std::time::Instant;

use evgaze::io::write_prediction_csv;
use evgaze::metrics::PupilPrediction;
use evgaze::nn::weights::load_weights;
use evgaze::nn::{decode_output, forward_offline, stream_init, stream_step, ModelSpec};
use evgaze::FrameTensor;

use crate::config::{section, PipelineConfig};
use crate::error::{write_file, CliError, Result, EXIT_SHAPE};

use super::represent::RepresentManifest;
use super::{latency_stats, load_labels};

#[derive(Debug, Clone, PartialEq)]
pub struct InferSummary {
    pub frames: usize,
    pub predictions: usize,
    pub offline: bool,
    pub latency_mean_ms: f64,
    pub latency_p99_ms: f64,
}

impl fmt::Display for InferSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode={}", if self.offline { "offline" } else { "streaming" })?;
        writeln!(f, "frames={}", self.frames)?;
        writeln!(f, "predictions={}", self.predictions)?;
        writeln!(f, "latency_mean_ms={:.4}", self.latency_mean_ms)?;
        writeln!(f, "latency_p99_ms={:.4}", self.latency_p99_ms)
    }
}

/// Model outputs for every frame plus per-frame wall-clock seconds. Offline
/// mode runs the whole sequence at once and reports its average.
pub fn run_model(model: &ModelSpec, frames: &[FrameTensor], offline: bool) -> Result<(Vec<FrameTensor>, Vec<f64>)> {
    let want = model.input_dims();
    if let Some(f) = frames.iter().find(|f| f.dims() != want) {
        return Err(CliError::new(
            EXIT_SHAPE,
            format!("model expects frames of {:?}, representation gives {:?}", want, f.dims()),
        ));
    }
    if frames.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    if offline {
        let seq = FrameTensor::stack(frames)?;
        let start = Instant::now();
        let out = forward_offline(model, &seq)?;
        let per = start.elapsed().as_secs_f64() / frames.len() as f64;
        Ok((out, vec![per; frames.len()]))
    } else {
        let mut state = stream_init(model);
        let mut out = Vec::with_capacity(frames.len());
        let mut lat = Vec::with_capacity(frames.len());
        for f in frames {
            let start = Instant::now();
            out.push(stream_step(model, &mut state, f)?);
            lat.push(start.elapsed().as_secs_f64());
        }
        Ok((out, lat))
    }
}

/// Runs the model over the represented windows and decodes a prediction
/// per label time.
///
/// The prediction at time `T` comes from the latest window ending at or
/// before `T`, so it only sees events older than `T`. Times before the
/// first window end get the sensor center with zero confidence. Without a
/// labels file, one row is written per window at its end time.
pub fn run(cfg: &PipelineConfig, offline_flag: bool) -> Result<InferSummary> {
    let c = section(&cfg.infer, "infer")?;
    let offline = offline_flag || c.offline;
    let manifest_path = cfg.resolve(&c.manifest);
    let manifest = RepresentManifest::load(&manifest_path)?;
    let weights_path = cfg.resolve(&c.weights);
    let model = load_weights(&weights_path).map_err(|e| CliError::from(e).in_file(&weights_path))?;
    let frames = manifest.load_frames(&manifest_path)?;
    let (outputs, latencies) = run_model(&model, &frames, offline)?;

    let (sw, sh) = (cfg.sensor.width as f64, cfg.sensor.height as f64);
    let decoded: Vec<PupilPrediction> = outputs
        .iter()
        .map(|o| decode_output(model.head(), o, sw, sh))
        .collect::<evgaze::Result<_>>()?;
    let ends: Vec<u64> = manifest.windows.iter().map(|w| w.t_end).collect();
    let times = match &c.labels {
        Some(p) => load_labels(cfg, &cfg.resolve(p))?.times(),
        None => ends.clone(),
    };
    let fallback = PupilPrediction {
        x: sw / 2.0,
        y: sh / 2.0,
        confidence: 0.0,
    };
    let rows: Vec<(u64, PupilPrediction)> = times
        .iter()
        .map(|&t| {
            let k = ends.partition_point(|&e| e <= t);
            (t, if k == 0 { fallback } else { decoded[k - 1] })
        })
        .collect();
    write_file(&cfg.resolve(&c.predictions), write_prediction_csv(&rows))?;
    let (mean, p99) = latency_stats(&latencies);
    Ok(InferSummary {
        frames: frames.len(),
        predictions: rows.len(),
        offline,
        latency_mean_ms: mean,
        latency_p99_ms: p99,
    })
}
