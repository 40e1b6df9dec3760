//! One module per subcommand. Each returns a summary whose `Display` is
//! what the binary prints.

pub mod augment;
pub mod bench;
pub mod eval;
pub mod generate;
pub mod infer;
pub mod represent;
pub mod track;

use std::path::Path;

use evgaze::io::{parse_event_csv, parse_label_csv};
use evgaze::metrics::LabelSeries;
use evgaze::EventStream;

use crate::config::PipelineConfig;
use crate::error::{read_text, CliError, Result};

/// Reads an events CSV on the config's sensor. `path` is already resolved.
pub(crate) fn load_events(cfg: &PipelineConfig, path: &Path) -> Result<EventStream> {
    let text = read_text(path)?;
    parse_event_csv(&text, cfg.sensor.width, cfg.sensor.height).map_err(|e| CliError::from(e).in_file(path))
}

pub(crate) fn load_labels(cfg: &PipelineConfig, path: &Path) -> Result<LabelSeries> {
    let text = read_text(path)?;
    parse_label_csv(&text, cfg.label_rate_hz).map_err(|e| CliError::from(e).in_file(path))
}

/// Mean and 99th percentile (nearest rank) of per-frame latencies, in ms.
pub(crate) fn latency_stats(samples_s: &[f64]) -> (f64, f64) {
    if samples_s.is_empty() {
        return (0.0, 0.0);
    }
    let mut v: Vec<f64> = samples_s.iter().map(|s| s * 1e3).collect();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let rank = ((0.99 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    (mean, v[rank - 1])
}
