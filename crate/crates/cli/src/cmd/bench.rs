use std::fmt;
use std::time::Instant;

use evgaze::nn::init::representative_model;
use evgaze::nn::weights::load_weights;
use evgaze::nn::{stream_init, stream_step, ModelSpec};
use evgaze::sparse::SparseStreamer;
use evgaze::FrameTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{section, BenchConfig, PipelineConfig};
use crate::error::{write_file, CliError, Result, EXIT_SHAPE};

use super::latency_stats;
use super::represent::RepresentManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendStats {
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub macs_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerMacs {
    pub kind: String,
    pub output: [usize; 3],
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub input: [usize; 3],
    pub parameters: usize,
    pub sparse_layers: usize,
    /// Mean fraction of inactive input sites.
    pub input_sparsity: f64,
    pub layers: Vec<LayerMacs>,
    pub dense: BackendStats,
    pub sparse: BackendStats,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c, h, w] = self.input;
        writeln!(
            f,
            "frames={} input={c}x{h}x{w} parameters={} sparse_layers={} input_sparsity={:.4}",
            self.frames, self.parameters, self.sparse_layers, self.input_sparsity
        )?;
        writeln!(f, "{:<4} {:<22} {:>16} {:>12}", "#", "layer", "output", "macs")?;
        for (i, l) in self.layers.iter().enumerate() {
            let [c, h, w] = l.output;
            writeln!(f, "{i:<4} {:<22} {:>16} {:>12}", l.kind, format!("{c}x{h}x{w}"), l.macs)?;
        }
        writeln!(f, "{:<8} {:>10} {:>10} {:>16}", "backend", "mean_ms", "p99_ms", "macs_per_frame")?;
        for (name, s) in [("dense", &self.dense), ("sparse", &self.sparse)] {
            writeln!(
                f,
                "{name:<8} {:>10.4} {:>10.4} {:>16.0}",
                s.mean_ms, s.p99_ms, s.macs_per_frame
            )?;
        }
        Ok(())
    }
}

/// Frames with each site active with probability `density`, holding small
/// positive event counts in every channel.
pub fn synthetic_frames(dims: [usize; 3], n: usize, density: f64, seed: u64) -> Vec<FrameTensor> {
    let [c, h, w] = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut t = FrameTensor::zeros(&dims);
            for site in 0..h * w {
                if rng.random_bool(density) {
                    for ch in 0..c {
                        t.data_mut()[ch * h * w + site] = rng.random_range(1..=3) as f32;
                    }
                }
            }
            t
        })
        .collect()
}

fn zero_fraction(f: &FrameTensor) -> f64 {
    let [c, h, w]: [usize; 3] = f.dims().try_into().expect("rank-3 frame");
    let plane = h * w;
    let inactive = (0..plane).filter(|&s| (0..c).all(|ch| f.data()[ch * plane + s] == 0.0)).count();
    inactive as f64 / plane as f64
}

/// Times streaming inference on the same weights through the dense engine
/// and through the sparse-prefix backend. Everything but the latency
/// columns is deterministic.
pub fn bench(model: &ModelSpec, frames: &[FrameTensor], warmup: usize) -> Result<BenchReport> {
    let want = model.input_dims();
    if let Some(f) = frames.iter().find(|f| f.dims() != want) {
        return Err(CliError::new(
            EXIT_SHAPE,
            format!("model expects frames of {:?}, got {:?}", want, f.dims()),
        ));
    }
    if frames.is_empty() {
        return Err(CliError::config("bench needs at least one frame"));
    }
    let warm = || frames.iter().cycle().take(warmup);

    let mut state = stream_init(model);
    for f in warm() {
        stream_step(model, &mut state, f)?;
    }
    let mut state = stream_init(model);
    let mut dense_lat = Vec::with_capacity(frames.len());
    for f in frames {
        let start = Instant::now();
        stream_step(model, &mut state, f)?;
        dense_lat.push(start.elapsed().as_secs_f64());
    }

    let mut sparse = SparseStreamer::new(model)?;
    for f in warm() {
        sparse.step(f)?;
    }
    let mut sparse = SparseStreamer::new(model)?;
    let mut sparse_lat = Vec::with_capacity(frames.len());
    let mut prefix_macs = 0u64;
    for f in frames {
        let start = Instant::now();
        let (_, stats) = sparse.step(f)?;
        sparse_lat.push(start.elapsed().as_secs_f64());
        prefix_macs += stats.macs;
    }

    let n = frames.len() as f64;
    let (dm, dp) = latency_stats(&dense_lat);
    let (sm, sp) = latency_stats(&sparse_lat);
    let layers = model
        .layers()
        .iter()
        .zip(model.macs_per_layer())
        .enumerate()
        .map(|(i, (l, macs))| LayerMacs {
            kind: l.kind().to_string(),
            output: model.layer_output(i),
            macs,
        })
        .collect();
    Ok(BenchReport {
        frames: frames.len(),
        input: want,
        parameters: model.parameter_count(),
        sparse_layers: sparse.sparse_layers(),
        input_sparsity: frames.iter().map(zero_fraction).sum::<f64>() / n,
        layers,
        dense: BackendStats {
            mean_ms: dm,
            p99_ms: dp,
            macs_per_frame: model.macs_per_frame() as f64,
        },
        sparse: BackendStats {
            mean_ms: sm,
            p99_ms: sp,
            macs_per_frame: prefix_macs as f64 / n + sparse.suffix_macs() as f64,
        },
    })
}

fn load_inputs(cfg: &PipelineConfig, b: &BenchConfig, model: &ModelSpec) -> Result<Vec<FrameTensor>> {
    match &b.manifest {
        Some(p) => {
            let path = cfg.resolve(p);
            let frames = RepresentManifest::load(&path)?.load_frames(&path)?;
            if frames.is_empty() {
                return Err(CliError::config("bench manifest lists no windows"));
            }
            Ok(frames.iter().cycle().take(b.frames).cloned().collect())
        }
        None => {
            if !(0.0..=1.0).contains(&b.density) {
                return Err(CliError::config("bench density must lie in [0, 1]"));
            }
            Ok(synthetic_frames(model.input_dims(), b.frames, b.density, cfg.seed))
        }
    }
}

/// Runs on the calling thread only, so timings reflect a single core.
pub fn run(cfg: &PipelineConfig) -> Result<BenchReport> {
    let b = section(&cfg.bench, "bench")?;
    let model = match &b.weights {
        Some(p) => {
            let path = cfg.resolve(p);
            load_weights(&path).map_err(|e| CliError::from(e).in_file(&path))?
        }
        None => representative_model(cfg.seed),
    };
    let frames = load_inputs(cfg, b, &model)?;
    let report = bench(&model, &frames, b.warmup)?;
    if let Some(p) = &b.report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(&cfg.resolve(p), json + "\n")?;
    }
    Ok(report)
}
