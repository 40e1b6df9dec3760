//! Grid prediction decoding and the training-loss evaluators.

use crate::error::{invalid, Error, Result};
use crate::metrics::PupilPrediction;

/// Per-cell presence probability and in-cell offsets on a `rows x cols`
/// grid laid over the frame. Vectors are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPrediction {
    pub rows: usize,
    pub cols: usize,
    pub prob: Vec<f64>,
    pub offset_x: Vec<f64>,
    pub offset_y: Vec<f64>,
}

/// Grid used by the CenterNet-style head.
pub const DEFAULT_GRID: (usize, usize) = (3, 4);

impl GridPrediction {
    pub fn new(
        rows: usize,
        cols: usize,
        prob: Vec<f64>,
        offset_x: Vec<f64>,
        offset_y: Vec<f64>,
    ) -> Result<Self> {
        let n = rows * cols;
        if n == 0 || prob.len() != n || offset_x.len() != n || offset_y.len() != n {
            return Err(invalid(format!("grid {rows}x{cols} needs {n} values per field")));
        }
        if prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("grid probabilities must lie in [0, 1]"));
        }
        Ok(GridPrediction {
            rows,
            cols,
            prob,
            offset_x,
            offset_y,
        })
    }
}

/// Picks the most probable cell (first in row-major order on ties) and
/// places the pupil at `(col + offset_x, row + offset_y)` cell units.
pub fn grid_decode(g: &GridPrediction, frame_w: f64, frame_h: f64) -> PupilPrediction {
    let best = g
        .prob
        .iter()
        .enumerate()
        .fold(0, |b, (i, &p)| if p > g.prob[b] { i } else { b });
    let (row, col) = (best / g.cols, best % g.cols);
    let cell_w = frame_w / g.cols as f64;
    let cell_h = frame_h / g.rows as f64;
    PupilPrediction {
        x: (col as f64 + g.offset_x[best]) * cell_w,
        y: (row as f64 + g.offset_y[best]) * cell_h,
        confidence: g.prob[best],
    }
}

pub fn smooth_l1(d: f64, beta: f64) -> Result<f64> {
    if beta <= 0.0 || beta.is_nan() {
        return Err(invalid("smooth-L1 beta must be positive"));
    }
    let a = d.abs();
    Ok(if a < beta {
        0.5 * d * d / beta
    } else {
        a - 0.5 * beta
    })
}

const PROB_EPS: f64 = 1e-7;

/// Focal classification term of one cell.
///
/// Positive cells: `-(1 - p)^gamma * ln p`. Negative cells:
/// `-p^gamma * ln(1 - p)`. `p` is clamped to `[1e-7, 1 - 1e-7]`.
pub fn focal_cell_loss(p_hat: f64, present: bool, gamma: f64) -> f64 {
    let p = p_hat.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if present {
        -(1.0 - p).powf(gamma) * p.ln()
    } else {
        -p.powf(gamma) * (1.0 - p).ln()
    }
}

/// Ground truth for one frame of the grid loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridTarget {
    pub x: f64,
    pub y: f64,
    pub eye_open: bool,
}

/// Focal + smooth-L1 grid loss averaged over every cell of every valid
/// frame. A frame is valid when the eye is open and the pupil lies inside
/// the frame. Returns 0 when no frame is valid.
pub fn focal_grid_loss(
    preds: &[GridPrediction],
    targets: &[GridTarget],
    frame_w: f64,
    frame_h: f64,
    gamma: f64,
    beta: f64,
) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch(preds.len(), targets.len()));
    }
    if gamma < 0.0 || gamma.is_nan() {
        return Err(invalid("focal gamma must be non-negative"));
    }
    let (mut total, mut cells) = (0.0, 0usize);
    for (g, t) in preds.iter().zip(targets) {
        let inside = (0.0..frame_w).contains(&t.x) && (0.0..frame_h).contains(&t.y);
        if !t.eye_open || !inside {
            continue;
        }
        let cx = t.x / (frame_w / g.cols as f64);
        let cy = t.y / (frame_h / g.rows as f64);
        let (col, row) = (cx.floor() as usize, cy.floor() as usize);
        let target_cell = row * g.cols + col;
        for i in 0..g.rows * g.cols {
            let present = i == target_cell;
            total += focal_cell_loss(g.prob[i], present, gamma);
            if present {
                total += smooth_l1(g.offset_x[i] - (cx - col as f64), beta)?;
                total += smooth_l1(g.offset_y[i] - (cy - row as f64), beta)?;
            }
        }
        cells += g.rows * g.cols;
    }
    Ok(if cells == 0 { 0.0 } else { total / cells as f64 })
}

fn check_pairs(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `sqrt(mean(|pred - label|^2))` over 2-D points.
pub fn rmse_loss(preds: &[(f64, f64)], labels: &[(f64, f64)]) -> Result<f64> {
    check_pairs(preds, labels)?;
    if preds.is_empty() {
        return Err(invalid("rmse needs at least one pair"));
    }
    let sq: f64 = preds
        .iter()
        .zip(labels)
        .map(|(p, l)| (p.0 - l.0).powi(2) + (p.1 - l.1).powi(2))
        .sum();
    Ok((sq / preds.len() as f64).sqrt())
}

/// Position and first-difference consistency terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConsistency {
    pub total: f64,
    pub position: f64,
    pub velocity: f64,
}

/// `L_mc = L_0 + L_1`, where `L_0` is the mean Euclidean position error and
/// `L_1` the mean Euclidean error of one-step differences.
pub fn motion_consistency_loss(
    preds: &[(f64, f64)],
    labels: &[(f64, f64)],
) -> Result<MotionConsistency> {
    check_pairs(preds, labels)?;
    if preds.len() < 2 {
        return Err(invalid("motion consistency needs at least two frames"));
    }
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let position = preds
        .iter()
        .zip(labels)
        .map(|(&p, &l)| dist(p, l))
        .sum::<f64>()
        / preds.len() as f64;
    let diff = |s: &[(f64, f64)], t: usize| (s[t].0 - s[t - 1].0, s[t].1 - s[t - 1].1);
    let velocity = (1..preds.len())
        .map(|t| dist(diff(preds, t), diff(labels, t)))
        .sum::<f64>()
        / (preds.len() - 1) as f64;
    Ok(MotionConsistency {
        total: position + velocity,
        position,
        velocity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, hot: usize, ox: f64, oy: f64) -> GridPrediction {
        let n = rows * cols;
        let mut prob = vec![0.1; n];
        prob[hot] = 0.9;
        GridPrediction::new(rows, cols, prob, vec![ox; n], vec![oy; n]).unwrap()
    }

    #[test]
    fn decode() {
        let p = grid_decode(&grid(1, 1, 0, 0.5, 0.5), 80.0, 60.0);
        assert_eq!((p.x, p.y), (40.0, 30.0));
        let p = grid_decode(&grid(3, 4, 0, 0.0, 0.0), 80.0, 60.0);
        assert_eq!((p.x, p.y), (0.0, 0.0));
        let p = grid_decode(&grid(3, 4, 11, 0.5, 0.5), 80.0, 60.0);
        assert_eq!((p.x, p.y, p.confidence), (70.0, 50.0, 0.9));

        let tie = GridPrediction::new(1, 2, vec![0.5, 0.5], vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert_eq!(grid_decode(&tie, 2.0, 1.0).x, 0.0);
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.0, 0.11).unwrap(), 0.0);
        assert!((smooth_l1(0.11, 0.11).unwrap() - 0.055).abs() < 1e-12);
        assert!((smooth_l1(1.0, 0.11).unwrap() - 0.945).abs() < 1e-12);
        assert!((smooth_l1(-1.0, 0.11).unwrap() - 0.945).abs() < 1e-12);
        assert!(smooth_l1(1.0, 0.0).is_err());
    }

    #[test]
    fn focal_terms() {
        let q = 0.25 * 2f64.ln();
        assert!((focal_cell_loss(0.5, true, 2.0) - q).abs() < 1e-12);
        assert!((focal_cell_loss(0.5, false, 2.0) - q).abs() < 1e-12);
        assert!(focal_cell_loss(1.0, true, 2.0) < 1e-12);
        assert!(focal_cell_loss(0.0, false, 2.0) < 1e-12);
        assert!(focal_cell_loss(0.0, true, 2.0).is_finite());
    }

    #[test]
    fn grid_loss_perfect_and_masked() {
        // pupil at (70, 50) on 80x60 -> cell 11, offsets (0.5, 0.5)
        let mut prob = vec![0.0; 12];
        prob[11] = 1.0;
        let g = GridPrediction::new(3, 4, prob, vec![0.5; 12], vec![0.5; 12]).unwrap();
        let t = GridTarget { x: 70.0, y: 50.0, eye_open: true };
        let l = focal_grid_loss(std::slice::from_ref(&g), &[t], 80.0, 60.0, 2.0, 0.11).unwrap();
        assert!((0.0..1e-9).contains(&l));

        let bad = grid(3, 4, 0, 0.0, 0.0);
        let closed = GridTarget { eye_open: false, ..t };
        let l = focal_grid_loss(std::slice::from_ref(&bad), &[closed], 80.0, 60.0, 2.0, 0.11).unwrap();
        assert_eq!(l, 0.0);
        let l = focal_grid_loss(&[bad], &[t], 80.0, 60.0, 2.0, 0.11).unwrap();
        assert!(l > 0.0);
        assert!(focal_grid_loss(&[g], &[], 80.0, 60.0, 2.0, 0.11).is_err());
    }

    #[test]
    fn rmse_values() {
        assert_eq!(rmse_loss(&[(1.0, 1.0)], &[(1.0, 1.0)]).unwrap(), 0.0);
        assert_eq!(rmse_loss(&[(3.0, 4.0)], &[(0.0, 0.0)]).unwrap(), 5.0);
        let r = rmse_loss(&[(3.0, 4.0), (0.0, 0.0)], &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(rmse_loss(&[(0.0, 0.0)], &[]).is_err());
    }

    #[test]
    fn motion_consistency() {
        let labels = [(0.0, 0.0), (1.0, 2.0), (4.0, 4.0)];
        let m = motion_consistency_loss(&labels, &labels).unwrap();
        assert_eq!((m.total, m.position, m.velocity), (0.0, 0.0, 0.0));

        let shifted: Vec<_> = labels.iter().map(|&(x, y)| (x + 3.0, y + 4.0)).collect();
        let m = motion_consistency_loss(&shifted, &labels).unwrap();
        assert_eq!(m.velocity, 0.0);
        assert!((m.position - 5.0).abs() < 1e-12);

        let m = motion_consistency_loss(&[(0.0, 0.0), (3.0, 4.0)], &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
        assert_eq!(m.velocity, 5.0);
        assert!(motion_consistency_loss(&labels[..1], &labels[..1]).is_err());
    }
}
