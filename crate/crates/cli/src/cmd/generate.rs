use std::fmt;

use evgaze::io::{write_event_csv, write_label_csv};
use evgaze::sim::{gen_trajectory, render_events};

use crate::config::{section, PipelineConfig};
use crate::error::{write_file, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateSummary {
    pub events: usize,
    pub labels: usize,
    pub closed_labels: usize,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events={}", self.events)?;
        writeln!(f, "labels={}", self.labels)?;
        writeln!(f, "closed_labels={}", self.closed_labels)
    }
}

/// Synthesizes a recording and writes its events and labels CSV files.
pub fn run(cfg: &PipelineConfig) -> Result<GenerateSummary> {
    let g = section(&cfg.generate, "generate")?;
    let traj = cfg.trajectory_spec(g)?;
    let scene = cfg.scene_spec(g)?;
    let labels = gen_trajectory(&traj, cfg.label_rate_hz)?;
    let events = render_events(&labels, &scene)?;
    write_file(&cfg.resolve(&g.events), write_event_csv(&events))?;
    write_file(&cfg.resolve(&g.labels), write_label_csv(&labels))?;
    Ok(GenerateSummary {
        events: events.len(),
        labels: labels.len(),
        closed_labels: labels.records().iter().filter(|r| r.close).count(),
    })
}
