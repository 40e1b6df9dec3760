//! Stream-to-stream event augmentations.
//!
//! Every transform returns a valid [`EventStream`]: events that would leave
//! the sensor plane (or the requested time window) are dropped, and the
//! output is re-sorted by time where a transform can reorder events.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::events::{Event, EventStream, Window};

/// What to do with events shifted outside the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePolicy {
    Drop,
    Clamp,
}

/// Mirror `x -> width - 1 - x`.
///
/// This is a spatial reflection. Some training recipes avoid
/// reflections for eye tracking, so callers opt in explicitly.
pub fn spatial_flip_h(stream: &EventStream) -> EventStream {
    let w = stream.width();
    let events = stream
        .events()
        .iter()
        .map(|e| Event { x: w - 1 - e.x, ..*e })
        .collect();
    EventStream::from_parts_unchecked(w, stream.height(), events)
}

pub fn spatial_shift(stream: &EventStream, dx: i32, dy: i32, policy: EdgePolicy) -> EventStream {
    let (w, h) = (stream.width() as i64, stream.height() as i64);
    let events = stream
        .events()
        .iter()
        .filter_map(|e| {
            let x = e.x as i64 + dx as i64;
            let y = e.y as i64 + dy as i64;
            match policy {
                EdgePolicy::Drop if x < 0 || y < 0 || x >= w || y >= h => None,
                _ => Some(Event {
                    x: x.clamp(0, w - 1) as u16,
                    y: y.clamp(0, h - 1) as u16,
                    ..*e
                }),
            }
        })
        .collect();
    EventStream::from_parts_unchecked(stream.width(), stream.height(), events)
}

/// Time reversal over the stream's span with polarity inversion.
///
/// Timestamps are reflected about the midpoint of `[first.t, last.t]`, so
/// the span is preserved and the transform is an involution. A reversed
/// brightness increase is a decrease, hence the polarity flip.
pub fn temporal_flip(stream: &EventStream) -> EventStream {
    let events = stream.events();
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return stream.clone();
    };
    let pivot = first.t + last.t;
    let flipped = events
        .iter()
        .rev()
        .map(|e| Event {
            t: pivot - e.t,
            p: !e.p,
            ..*e
        })
        .collect();
    EventStream::from_parts_unchecked(stream.width(), stream.height(), flipped)
}

/// Shift timestamps by `dt_us`, keeping only events that land inside
/// `window`.
pub fn temporal_shift(stream: &EventStream, dt_us: i64, window: Window) -> EventStream {
    let events = stream
        .events()
        .iter()
        .filter_map(|e| {
            let t = e.t as i64 + dt_us;
            (t >= 0 && window.contains(t as u64)).then_some(Event { t: t as u64, ..*e })
        })
        .collect();
    EventStream::from_parts_unchecked(stream.width(), stream.height(), events)
}

/// Spatio-temporal affine augmentation parameters.
///
/// The spatial map is `c + R(rotation) * S(scale) * (p - c) + translate`
/// with `c` the sensor center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffineParams {
    pub scale_x: f64,
    pub scale_y: f64,
    pub rotation: f64,
    pub translate_x: f64,
    pub translate_y: f64,
    pub time_scale: f64,
    pub time_flip: bool,
    pub polarity_flip: bool,
}

impl Default for AffineParams {
    fn default() -> Self {
        AffineParams {
            scale_x: 1.0,
            scale_y: 1.0,
            rotation: 0.0,
            translate_x: 0.0,
            translate_y: 0.0,
            time_scale: 1.0,
            time_flip: false,
            polarity_flip: false,
        }
    }
}

impl AffineParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.scale_x) || !ok(self.scale_y) || !ok(self.time_scale) {
            return Err(invalid("affine scale factors must be positive and finite"));
        }
        if !self.rotation.is_finite() || !self.translate_x.is_finite() || !self.translate_y.is_finite() {
            return Err(invalid("affine parameters must be finite"));
        }
        Ok(())
    }

    /// Parameters undoing the spatial part of `self`. Only defined for
    /// isotropic scale, where rotation and scale commute.
    pub fn inverse(&self) -> Option<AffineParams> {
        if self.scale_x != self.scale_y {
            return None;
        }
        let s = self.scale_x;
        let (sin, cos) = (-self.rotation).sin_cos();
        // -R^-1 S^-1 t
        let tx = -(cos * self.translate_x - sin * self.translate_y) / s;
        let ty = -(sin * self.translate_x + cos * self.translate_y) / s;
        Some(AffineParams {
            scale_x: 1.0 / s,
            scale_y: 1.0 / s,
            rotation: -self.rotation,
            translate_x: tx,
            translate_y: ty,
            time_scale: 1.0 / self.time_scale,
            time_flip: self.time_flip,
            polarity_flip: self.polarity_flip,
        })
    }

    fn map_point(&self, x: f64, y: f64, cx: f64, cy: f64) -> (f64, f64) {
        let (sin, cos) = self.rotation.sin_cos();
        let dx = (x - cx) * self.scale_x;
        let dy = (y - cy) * self.scale_y;
        (
            cx + cos * dx - sin * dy + self.translate_x,
            cy + sin * dx + cos * dy + self.translate_y,
        )
    }
}

/// Nearest integer, halves rounded toward +infinity.
fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

pub fn affine_events(stream: &EventStream, params: &AffineParams) -> Result<EventStream> {
    params.validate()?;
    let (w, h) = (stream.width(), stream.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let events: Vec<Event> = stream
        .events()
        .iter()
        .filter_map(|e| {
            let (x, y) = params.map_point(e.x as f64, e.y as f64, cx, cy);
            let (x, y) = (round_half_up(x), round_half_up(y));
            if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                return None;
            }
            let t = round_half_up(e.t as f64 * params.time_scale) as u64;
            Some(Event {
                t,
                x: x as u16,
                y: y as u16,
                p: e.p ^ params.polarity_flip,
            })
        })
        .collect();
    let out = EventStream::from_parts_unchecked(w, h, events);
    Ok(if params.time_flip {
        temporal_flip(&out)
    } else {
        out
    })
}

/// Axis-aligned rectangle `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoutMask {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

impl CutoutMask {
    fn contains(&self, x: u16, y: u16) -> bool {
        let (x, y) = (x as u32, y as u32);
        x >= self.x0 && x - self.x0 < self.w && y >= self.y0 && y - self.y0 < self.h
    }
}

/// Removes events under `mask` from every stream of a recording.
pub fn event_cutout(streams: &[EventStream], mask: CutoutMask) -> Result<Vec<EventStream>> {
    let Some(first) = streams.first() else {
        return Ok(Vec::new());
    };
    let (w, h) = (first.width(), first.height());
    if streams.iter().any(|s| s.width() != w || s.height() != h) {
        return Err(invalid("all streams of a recording must share sensor dims"));
    }
    if mask.w == 0 || mask.h == 0 || mask.x0 >= w as u32 || mask.y0 >= h as u32 {
        return Err(invalid(format!("cutout {mask:?} does not intersect the {w}x{h} sensor")));
    }
    Ok(streams
        .iter()
        .map(|s| {
            let kept = s
                .events()
                .iter()
                .filter(|e| !mask.contains(e.x, e.y))
                .copied()
                .collect();
            EventStream::from_parts_unchecked(w, h, kept)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(t: u64, x: u16, y: u16, p: bool, w: u16, h: u16) -> EventStream {
        EventStream::new(w, h, vec![Event::new(t, x, y, p)]).unwrap()
    }

    #[test]
    fn flip_h() {
        let s = one(0, 0, 0, true, 80, 60);
        assert_eq!(spatial_flip_h(&s).events()[0].x, 79);
        assert_eq!(spatial_flip_h(&one(0, 40, 0, true, 80, 60)).events()[0].x, 39);
        assert_eq!(spatial_flip_h(&spatial_flip_h(&s)), s);
    }

    #[test]
    fn shift_policies() {
        let s = one(0, 78, 3, true, 80, 60);
        assert_eq!(spatial_shift(&s, 0, 0, EdgePolicy::Drop), s);
        assert!(spatial_shift(&s, 5, 0, EdgePolicy::Drop).is_empty());
        assert_eq!(spatial_shift(&s, 5, 0, EdgePolicy::Clamp).events()[0].x, 79);
    }

    #[test]
    fn temporal_flip_reverses_and_inverts() {
        let s = EventStream::new(
            10,
            10,
            vec![Event::new(0, 1, 0, true), Event::new(10, 2, 0, false)],
        )
        .unwrap();
        let f = temporal_flip(&s);
        assert_eq!(
            f.events(),
            [Event::new(0, 2, 0, true), Event::new(10, 1, 0, false)]
        );
        assert_eq!(temporal_flip(&f), s);

        let mid = one(5, 3, 3, true, 10, 10);
        let f = temporal_flip(&mid);
        assert_eq!(f.events()[0], Event::new(5, 3, 3, false));
    }

    #[test]
    fn temporal_shift_window() {
        let s = one(0, 1, 1, true, 4, 4);
        let w = Window::new(0, 10_000).unwrap();
        assert_eq!(temporal_shift(&s, 0, w), s);
        assert_eq!(temporal_shift(&s, 5000, w).events()[0].t, 5000);
        assert!(temporal_shift(&s, 10_000, w).is_empty());
        assert!(temporal_shift(&s, -1, w).is_empty());
    }

    #[test]
    fn affine_cases() {
        let s = one(7, 3, 4, true, 10, 10);
        assert_eq!(affine_events(&s, &AffineParams::default()).unwrap(), s);
        let tr = AffineParams {
            translate_x: 1.0,
            ..Default::default()
        };
        assert_eq!(affine_events(&s, &tr).unwrap().events()[0], Event::new(7, 4, 4, true));

        // rotate (c + (10, 0)) by a quarter turn about c = (40, 40)
        let s = one(0, 50, 40, true, 81, 81);
        let rot = AffineParams {
            rotation: std::f64::consts::FRAC_PI_2,
            ..Default::default()
        };
        let e = affine_events(&s, &rot).unwrap().events()[0];
        assert_eq!((e.x, e.y), (40, 50));

        let bad = AffineParams {
            time_scale: 0.0,
            ..Default::default()
        };
        assert!(affine_events(&s, &bad).is_err());
    }

    #[test]
    fn cutout() {
        let s = EventStream::new(
            30,
            30,
            vec![Event::new(0, 5, 5, true), Event::new(1, 20, 20, true), Event::new(2, 2, 2, false)],
        )
        .unwrap();
        let all = CutoutMask { x0: 0, y0: 0, w: 30, h: 30 };
        assert!(event_cutout(&[s.clone(), s.clone()], all).unwrap().iter().all(|s| s.is_empty()));
        let px = CutoutMask { x0: 2, y0: 2, w: 1, h: 1 };
        assert_eq!(event_cutout(std::slice::from_ref(&s), px).unwrap()[0].len(), 2);
        let corner = CutoutMask { x0: 0, y0: 0, w: 10, h: 10 };
        let out = event_cutout(std::slice::from_ref(&s), corner).unwrap();
        assert_eq!(out[0].events(), [Event::new(1, 20, 20, true)]);
        let outside = CutoutMask { x0: 30, y0: 0, w: 5, h: 5 };
        assert!(event_cutout(&[s], outside).is_err());
    }
}
