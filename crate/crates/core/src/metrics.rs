//! Ground-truth labels, predictions and the p-accuracy / distance metrics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default label rate of the eye-tracking ground truth.
pub const LABEL_RATE_HZ: f64 = 100.0;

/// Tolerances (pixels) reported by [`evaluate`].
pub const P_TOLERANCES: [u32; 5] = [1, 3, 5, 10, 15];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRecord {
    pub t: u64,
    pub x: f64,
    pub y: f64,
    /// Eye closed (blink).
    pub close: bool,
}

/// Pupil-center labels with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSeries {
    records: Vec<LabelRecord>,
    rate_hz: f64,
}

impl LabelSeries {
    pub fn new(records: Vec<LabelRecord>, rate_hz: f64) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(invalid("label rate must be positive"));
        }
        if let Some(i) = records.windows(2).position(|p| p[1].t <= p[0].t) {
            return Err(Error::NonMonotonic { line: i + 1 });
        }
        Ok(LabelSeries { records, rate_hz })
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PupilPrediction {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p1: f64,
    pub p3: f64,
    pub p5: f64,
    pub p10: f64,
    pub p15: f64,
    pub mean_euclidean: f64,
    pub mean_manhattan: f64,
    pub count_evaluated: usize,
    pub count_excluded: usize,
}

impl MetricsReport {
    /// Accuracies paired with their tolerance, in increasing `p`.
    pub fn p_accuracy(&self) -> [(u32, f64); 5] {
        [
            (1, self.p1),
            (3, self.p3),
            (5, self.p5),
            (10, self.p10),
            (15, self.p15),
        ]
    }

    /// Flat `key=value` text block, one field per line.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (p, acc) in self.p_accuracy() {
            s.push_str(&format!("p{p}={acc}\n"));
        }
        s.push_str(&format!("mean_euclidean={}\n", self.mean_euclidean));
        s.push_str(&format!("mean_manhattan={}\n", self.mean_manhattan));
        s.push_str(&format!("count_evaluated={}\n", self.count_evaluated));
        s.push_str(&format!("count_excluded={}\n", self.count_excluded));
        s
    }
}

/// Scores predictions against labels row by row.
///
/// A prediction succeeds at tolerance `p` when its Euclidean distance is at
/// most `p`. With `include_closed = false`, blink rows are skipped and
/// counted in `count_excluded`. When nothing is evaluated, all accuracies
/// and distances are zero.
pub fn evaluate(
    preds: &[PupilPrediction],
    labels: &LabelSeries,
    include_closed: bool,
) -> Result<MetricsReport> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    let mut hits = [0usize; 5];
    let (mut l2, mut l1) = (0.0f64, 0.0f64);
    let (mut n, mut excluded) = (0usize, 0usize);
    for (p, r) in preds.iter().zip(labels.records()) {
        if r.close && !include_closed {
            excluded += 1;
            continue;
        }
        let (dx, dy) = (p.x - r.x, p.y - r.y);
        let d = dx.hypot(dy);
        for (hit, &tol) in hits.iter_mut().zip(&P_TOLERANCES) {
            if d <= tol as f64 {
                *hit += 1;
            }
        }
        l2 += d;
        l1 += dx.abs() + dy.abs();
        n += 1;
    }
    let frac = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
    Ok(MetricsReport {
        p1: frac(hits[0] as f64),
        p3: frac(hits[1] as f64),
        p5: frac(hits[2] as f64),
        p10: frac(hits[3] as f64),
        p15: frac(hits[4] as f64),
        mean_euclidean: frac(l2),
        mean_manhattan: frac(l1),
        count_evaluated: n,
        count_excluded: excluded,
    })
}
