use std::fmt;

use evgaze::augment::{
    affine_events, event_cutout, spatial_flip_h, spatial_shift, temporal_flip, temporal_shift, AffineParams, CutoutMask,
};
use evgaze::io::write_event_csv;
use evgaze::{EventStream, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{section, AugmentOp, PipelineConfig};
use crate::error::{write_file, CliError, Result};

use super::load_events;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentSummary {
    pub input_events: usize,
    pub output_events: usize,
    pub ops: usize,
}

impl fmt::Display for AugmentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ops={}", self.ops)?;
        writeln!(f, "input_events={}", self.input_events)?;
        writeln!(f, "output_events={}", self.output_events)
    }
}

fn draw(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max > 0.0 {
        rng.random_range(-max..=max)
    } else {
        0.0
    }
}

/// Applies one op. Random ops draw from `rng` in a fixed order.
pub fn apply(op: &AugmentOp, s: &EventStream, rng: &mut ChaCha8Rng) -> Result<EventStream> {
    Ok(match *op {
        AugmentOp::FlipH {} => spatial_flip_h(s),
        AugmentOp::Shift { dx, dy, edge } => spatial_shift(s, dx, dy, edge),
        AugmentOp::TemporalFlip {} => temporal_flip(s),
        AugmentOp::TemporalShift { dt_us } => match Window::new(0, s.duration_us()) {
            Ok(w) => temporal_shift(s, dt_us, w),
            Err(_) => s.clone(),
        },
        AugmentOp::Affine(p) => affine_events(s, &p)?,
        AugmentOp::RandomAffine {
            max_rotation,
            max_log_scale,
            max_translate_px,
            p_time_flip,
            p_polarity_flip,
        } => {
            let probs = [p_time_flip, p_polarity_flip];
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(CliError::config("random_affine probabilities must lie in [0, 1]"));
            }
            let bounds = [max_rotation, max_log_scale, max_translate_px];
            if bounds.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(CliError::config("random_affine bounds must be finite and >= 0"));
            }
            let scale = draw(rng, max_log_scale).exp();
            let p = AffineParams {
                rotation: draw(rng, max_rotation),
                scale_x: scale,
                scale_y: scale,
                translate_x: draw(rng, max_translate_px),
                translate_y: draw(rng, max_translate_px),
                time_flip: rng.random_bool(p_time_flip),
                polarity_flip: rng.random_bool(p_polarity_flip),
                ..AffineParams::default()
            };
            affine_events(s, &p)?
        }
        AugmentOp::Cutout(mask) => event_cutout(std::slice::from_ref(s), mask)?.remove(0),
        AugmentOp::RandomCutout { w, h } => {
            let (sw, sh) = (s.width() as u32, s.height() as u32);
            if w == 0 || h == 0 || w > sw || h > sh {
                return Err(CliError::config(format!("random cutout {w}x{h} does not fit the sensor")));
            }
            let mask = CutoutMask {
                x0: rng.random_range(0..=sw - w),
                y0: rng.random_range(0..=sh - h),
                w,
                h,
            };
            event_cutout(std::slice::from_ref(s), mask)?.remove(0)
        }
    })
}

/// Runs the configured op list in order on one events file.
pub fn run(cfg: &PipelineConfig) -> Result<AugmentSummary> {
    let a = section(&cfg.augment, "augment")?;
    let input = load_events(cfg, &cfg.resolve(&a.events))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = input.clone();
    for op in &a.ops {
        s = apply(op, &s, &mut rng)?;
    }
    write_file(&cfg.resolve(&a.output), write_event_csv(&s))?;
    Ok(AugmentSummary {
        input_events: input.len(),
        output_events: s.len(),
        ops: a.ops.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use evgaze::Event;

    #[test]
    fn random_ops_are_seeded() {
        let ev = (0..50).map(|i| Event::new(i * 7, (i % 16) as u16, (i % 9) as u16, i % 3 == 0)).collect();
        let s = EventStream::new(16, 9, ev).unwrap();
        let op = AugmentOp::RandomAffine {
            max_rotation: 0.3,
            max_log_scale: 0.2,
            max_translate_px: 2.0,
            p_time_flip: 0.5,
            p_polarity_flip: 0.5,
        };
        let a = apply(&op, &s, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = apply(&op, &s, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let cut = apply(&AugmentOp::RandomCutout { w: 16, h: 9 }, &s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(cut.is_empty());
        assert_eq!(
            apply(&AugmentOp::RandomCutout { w: 17, h: 1 }, &s, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap_err()
                .code,
            1
        );
    }
}
