//! Event data model: polarity events, validated streams and time windows.

use crate::error::{invalid, Error, Result};

/// A single polarity event. Timestamps are integer microseconds since the
/// start of the recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    /// `true` for ON (brightness increase).
    pub p: bool,
}

impl Event {
    pub const fn new(t: u64, x: u16, y: u16, p: bool) -> Self {
        Event { t, x, y, p }
    }

    /// Polarity as `+1.0` / `-1.0`.
    pub fn sign(&self) -> f32 {
        if self.p {
            1.0
        } else {
            -1.0
        }
    }
}

/// A time-ordered, in-bounds sequence of events from one sensor.
///
/// Construction validates both invariants, so every `EventStream` in the
/// program is sorted by `t` (ties allowed) and has all events inside the
/// sensor plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("sensor dimensions must be non-zero"));
        }
        let mut prev = 0u64;
        for (i, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(Error::OutOfBounds {
                    x: e.x as u64,
                    y: e.y as u64,
                    width,
                    height,
                    line: None,
                });
            }
            if i > 0 && e.t < prev {
                return Err(Error::NonMonotonic { line: i });
            }
            prev = e.t;
        }
        Ok(EventStream {
            width,
            height,
            events,
        })
    }

    pub fn empty(width: u16, height: u16) -> Self {
        EventStream::new(width, height, Vec::new()).expect("non-zero sensor dims")
    }

    /// Builds a stream from events in any order, sorting them stably by time.
    pub fn from_unsorted(width: u16, height: u16, mut events: Vec<Event>) -> Result<Self> {
        events.sort_by_key(|e| e.t);
        EventStream::new(width, height, events)
    }

    /// Internal constructor for transforms that preserve both invariants.
    pub(crate) fn from_parts_unchecked(width: u16, height: u16, events: Vec<Event>) -> Self {
        debug_assert!(EventStream::new(width, height, events.clone()).is_ok());
        EventStream {
            width,
            height,
            events,
        }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Exclusive end of the recorded span: one microsecond past the last
    /// event, or zero for an empty stream.
    pub fn duration_us(&self) -> u64 {
        self.events.last().map_or(0, |e| e.t + 1)
    }

    /// Events with `t_start <= t < t_end`.
    pub fn slice_window(&self, w: Window) -> EventStream {
        let lo = self.events.partition_point(|e| e.t < w.t_start);
        let hi = self.events.partition_point(|e| e.t < w.t_end);
        EventStream::from_parts_unchecked(self.width, self.height, self.events[lo..hi].to_vec())
    }

    /// Windows `[k*stride, k*stride + width)` for every `k` with
    /// `k*stride < duration_us()`.
    pub fn make_windows(&self, width_us: u64, stride_us: u64) -> Result<Vec<Window>> {
        make_windows(self.duration_us(), width_us, stride_us)
    }
}

/// Half-open time interval `[t_start, t_end)` in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Window {
    pub t_start: u64,
    pub t_end: u64,
}

impl Window {
    pub fn new(t_start: u64, t_end: u64) -> Result<Self> {
        if t_start >= t_end {
            return Err(invalid(format!(
                "window start {t_start} must precede end {t_end}"
            )));
        }
        Ok(Window { t_start, t_end })
    }

    pub fn span_us(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn contains(&self, t: u64) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

/// Window tiling over `[0, duration_us)`.
pub fn make_windows(duration_us: u64, width_us: u64, stride_us: u64) -> Result<Vec<Window>> {
    if width_us == 0 || stride_us == 0 {
        return Err(invalid("window width and stride must be positive"));
    }
    Ok((0..)
        .map(|k: u64| k * stride_us)
        .take_while(|&start| start < duration_us)
        .map(|start| Window {
            t_start: start,
            t_end: start + width_us,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(ts: &[u64]) -> EventStream {
        let evs = ts.iter().map(|&t| Event::new(t, 1, 1, true)).collect();
        EventStream::new(10, 10, evs).unwrap()
    }

    #[test]
    fn slice_window_half_open() {
        let s = stream(&[0, 10, 20]);
        let out = s.slice_window(Window::new(5, 15).unwrap());
        assert_eq!(out.events().iter().map(|e| e.t).collect::<Vec<_>>(), [10]);
        let all = s.slice_window(Window::new(0, 21).unwrap());
        assert_eq!(all, s);
        assert!(s.slice_window(Window::new(100, 200).unwrap()).is_empty());
    }

    #[test]
    fn window_counts() {
        // 100 ms of events.
        let s = stream(&[0, 99_999]);
        assert_eq!(s.make_windows(50_000, 50_000).unwrap().len(), 2);
        // k*10 ms < 100 ms for k = 0..=9
        assert_eq!(s.make_windows(50_000, 10_000).unwrap().len(), 10);
        assert!(stream(&[]).make_windows(50_000, 10_000).unwrap().is_empty());
        assert!(s.make_windows(0, 1).is_err());
        assert!(s.make_windows(1, 0).is_err());
    }

    #[test]
    fn rejects_bad_streams() {
        let oob = EventStream::new(4, 4, vec![Event::new(0, 4, 0, true)]);
        assert!(matches!(oob, Err(Error::OutOfBounds { .. })));
        let back = EventStream::new(4, 4, vec![Event::new(5, 0, 0, true), Event::new(1, 0, 0, true)]);
        assert!(matches!(back, Err(Error::NonMonotonic { .. })));
        assert!(Window::new(3, 3).is_err());
    }
}
