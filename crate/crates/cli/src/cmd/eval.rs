use std::fmt;
use std::path::PathBuf;

use evgaze::io::parse_prediction_csv;
use evgaze::metrics::{evaluate, MetricsReport};

use crate::config::PipelineConfig;
use crate::error::{read_text, write_file, CliError, Result, EXIT_ALIGNMENT, EXIT_CONFIG};

use super::load_labels;

/// Command-line overrides; each one wins over the config's `eval` section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalArgs {
    pub predictions: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub exclude_blinks: bool,
    pub min_p10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub min_p10: Option<f64>,
}

impl EvalOutcome {
    pub fn passed(&self) -> bool {
        self.min_p10.is_none_or(|m| self.report.p10 >= m)
    }
}

impl fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.report.to_key_value())?;
        if let Some(m) = self.min_p10 {
            writeln!(f, "min_p10={m}")?;
            writeln!(f, "status={}", if self.passed() { "pass" } else { "fail" })?;
        }
        Ok(())
    }
}

/// Scores a predictions CSV against a labels CSV row by row. Rows must
/// agree in count and timestamp.
pub fn run(cfg: &PipelineConfig, args: &EvalArgs) -> Result<EvalOutcome> {
    let sec = cfg.eval.as_ref();
    let pick = |cli: &Option<PathBuf>, from_cfg: Option<&PathBuf>, what: &str| {
        cli.clone()
            .or_else(|| from_cfg.map(|p| cfg.resolve(p)))
            .ok_or_else(|| CliError::config(format!("no {what} path given")))
    };
    let pred_path = pick(&args.predictions, sec.map(|s| &s.predictions), "predictions")?;
    let label_path = pick(&args.labels, sec.map(|s| &s.labels), "labels")?;
    let report_path = args
        .report
        .clone()
        .or_else(|| sec.and_then(|s| s.report.as_ref()).map(|p| cfg.resolve(p)));
    let exclude = args.exclude_blinks || sec.is_some_and(|s| s.exclude_blinks);
    let min_p10 = args.min_p10.or(sec.and_then(|s| s.min_p10));
    if let Some(m) = min_p10 {
        if !(0.0..=1.0).contains(&m) {
            return Err(CliError::new(EXIT_CONFIG, format!("min_p10 {m} not in [0, 1]")));
        }
    }

    let preds = parse_prediction_csv(&read_text(&pred_path)?).map_err(|e| CliError::from(e).in_file(&pred_path))?;
    let labels = load_labels(cfg, &label_path)?;
    if preds.len() != labels.len() {
        return Err(CliError::new(
            EXIT_ALIGNMENT,
            format!("{} predictions vs {} labels", preds.len(), labels.len()),
        ));
    }
    if let Some(i) = preds.iter().zip(labels.records()).position(|((t, _), l)| *t != l.t) {
        return Err(CliError::new(
            EXIT_ALIGNMENT,
            format!("row {}: prediction t={} vs label t={}", i + 1, preds[i].0, labels.records()[i].t),
        ));
    }
    let p: Vec<_> = preds.into_iter().map(|(_, p)| p).collect();
    let report = evaluate(&p, &labels, !exclude)?;
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(&path, json + "\n")?;
    }
    Ok(EvalOutcome { report, min_p10 })
}
