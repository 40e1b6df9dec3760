use std::fmt;

use evgaze::io::write_prediction_csv;
use evgaze::sim::centroid_tracker_with;

use crate::config::{section, PipelineConfig};
use crate::error::{write_file, Result};

use super::{load_events, load_labels};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSummary {
    pub predictions: usize,
    /// Rows where the tracker fell back for lack of recent events.
    pub fallback_rows: usize,
}

impl fmt::Display for TrackSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "predictions={}", self.predictions)?;
        writeln!(f, "fallback_rows={}", self.fallback_rows)
    }
}

/// Centroid-tracker predictions at every label time.
pub fn run(cfg: &PipelineConfig) -> Result<TrackSummary> {
    let t = section(&cfg.track, "track")?;
    let events = load_events(cfg, &cfg.resolve(&t.events))?;
    let labels = load_labels(cfg, &cfg.resolve(&t.labels))?;
    let times = labels.times();
    let preds = centroid_tracker_with(&events, &times, t.tau_s, t.w_ref)?;
    let fallback_rows = preds.iter().filter(|p| p.confidence == 0.0).count();
    let rows: Vec<_> = times.into_iter().zip(preds).collect();
    write_file(&cfg.resolve(&t.predictions), write_prediction_csv(&rows))?;
    Ok(TrackSummary {
        predictions: rows.len(),
        fallback_rows,
    })
}
