//! Point-cloud view of an event window: random sampling, farthest point
//! sampling and k-nearest-neighbour grouping.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::events::{EventStream, Window};

/// One event with time and position normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub p: bool,
}

impl CloudPoint {
    pub fn coords(&self) -> [f64; 3] {
        [self.t, self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventCloudSample {
    pub points: Vec<CloudPoint>,
    pub source_window: Window,
    /// Set when the source window held no events; `points` is then empty.
    pub empty: bool,
}

/// Samples `n` events from the stream, normalizing time over the stream's
/// own span `[first.t, last.t + 1)`.
pub fn sample_random(stream: &EventStream, n: usize, seed: u64) -> Result<EventCloudSample> {
    let window = match (stream.events().first(), stream.events().last()) {
        (Some(a), Some(b)) => Window::new(a.t, b.t + 1)?,
        _ => Window::new(0, 1)?,
    };
    sample_random_in(stream, window, n, seed)
}

/// Samples `n` events and normalizes time over `window`.
///
/// With at least `n` events the draw is without replacement. With fewer,
/// every event is kept once and the remainder is drawn with replacement.
/// Sampled points are returned in stream order.
pub fn sample_random_in(
    stream: &EventStream,
    window: Window,
    n: usize,
    seed: u64,
) -> Result<EventCloudSample> {
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let events = stream.events();
    if events.is_empty() {
        return Ok(EventCloudSample {
            points: Vec::new(),
            source_window: window,
            empty: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = if events.len() >= n {
        index::sample(&mut rng, events.len(), n).into_vec()
    } else {
        let mut all: Vec<usize> = (0..events.len()).collect();
        all.extend((events.len()..n).map(|_| rng.random_range(0..events.len())));
        all
    };
    picks.sort_unstable();

    let span = window.span_us() as f64;
    let wx = (stream.width().max(2) - 1) as f64;
    let wy = (stream.height().max(2) - 1) as f64;
    let points = picks
        .into_iter()
        .map(|i| {
            let e = events[i];
            let dt = e.t.saturating_sub(window.t_start) as f64;
            CloudPoint {
                t: (dt / span).clamp(0.0, 1.0),
                x: e.x as f64 / wx,
                y: e.y as f64 / wy,
                p: e.p,
            }
        })
        .collect();
    Ok(EventCloudSample {
        points,
        source_window: window,
        empty: false,
    })
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Greedy farthest point sampling starting from `start_index`. Ties go to
/// the smallest index.
pub fn farthest_point_sample(points: &[[f64; 3]], n: usize, start_index: usize) -> Result<Vec<usize>> {
    if n > points.len() {
        return Err(invalid(format!(
            "cannot select {n} points from {}",
            points.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if start_index >= points.len() {
        return Err(invalid(format!("start index {start_index} out of range")));
    }
    let mut selected = vec![false; points.len()];
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut out = Vec::with_capacity(n);
    let mut last = start_index;
    selected[last] = true;
    out.push(last);
    while out.len() < n {
        let mut best: Option<usize> = None;
        for i in 0..points.len() {
            if selected[i] {
                continue;
            }
            let d = dist2(&points[i], &points[last]);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if best.is_none_or(|b| min_d[i] > min_d[b]) {
                best = Some(i);
            }
        }
        last = best.expect("unselected point remains");
        selected[last] = true;
        out.push(last);
    }
    Ok(out)
}

/// For each query, the indices of its `k` nearest points in ascending
/// distance order (ties by index).
pub fn knn_group(points: &[[f64; 3]], queries: &[[f64; 3]], k: usize) -> Result<Vec<Vec<usize>>> {
    if k > points.len() {
        return Err(invalid(format!(
            "k = {k} exceeds point count {}",
            points.len()
        )));
    }
    Ok(queries
        .iter()
        .map(|q| {
            let mut order: Vec<(f64, usize)> =
                points.iter().enumerate().map(|(i, p)| (dist2(p, q), i)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order.into_iter().take(k).map(|(_, i)| i).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;

    #[test]
    fn fps_line() {
        let pts = [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap(), [0, 2]);
        let mut all = farthest_point_sample(&pts, 3, 1).unwrap();
        all.sort();
        assert_eq!(all, [0, 1, 2]);
        assert!(farthest_point_sample(&pts, 4, 0).is_err());
    }

    #[test]
    fn fps_duplicates_break_ties_by_index() {
        let pts = [[0.2, 0.2, 0.2], [0.2, 0.2, 0.2]];
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap(), [0, 1]);
    }

    #[test]
    fn knn_basics() {
        let pts = [[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(knn_group(&pts, &[[0.3, 0.0, 0.0]], 1).unwrap(), [[1]]);
        assert_eq!(knn_group(&pts, &[[0.0, 0.0, 0.0]], 2).unwrap(), [[0, 1]]);
        assert_eq!(knn_group(&pts, &[[1.0, 0.0, 0.0]], 3).unwrap(), [[2, 1, 0]]);
        assert!(knn_group(&pts, &[[0.0; 3]], 4).is_err());
    }

    #[test]
    fn random_sampling() {
        let one = EventStream::new(10, 10, vec![Event::new(7, 9, 0, true)]).unwrap();
        let s = sample_random(&one, 1, 0).unwrap();
        assert_eq!(s.points, [CloudPoint { t: 0.0, x: 1.0, y: 0.0, p: true }]);

        let evs: Vec<Event> = (0..5).map(|i| Event::new(i, i as u16, 0, false)).collect();
        let five = EventStream::new(10, 10, evs).unwrap();
        let s = sample_random(&five, 5, 3).unwrap();
        let xs: Vec<f64> = s.points.iter().map(|p| p.x * 9.0).collect();
        assert_eq!(xs, [0.0, 1.0, 2.0, 3.0, 4.0]);

        assert!(sample_random(&five, 0, 0).is_err());
        let padded = sample_random(&five, 12, 1).unwrap();
        assert_eq!(padded.points.len(), 12);

        let empty = sample_random(&EventStream::empty(4, 4), 8, 0).unwrap();
        assert!(empty.empty && empty.points.is_empty());
    }

    #[test]
    fn random_sampling_is_seeded() {
        let evs: Vec<Event> = (0..2000)
            .map(|i| Event::new(i * 3, (i % 80) as u16, (i % 60) as u16, i % 2 == 0))
            .collect();
        let s = EventStream::new(80, 60, evs).unwrap();
        let a = sample_random(&s, 1024, 42).unwrap();
        let b = sample_random(&s, 1024, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 1024);
        assert!(a
            .points
            .iter()
            .all(|p| [p.t, p.x, p.y].iter().all(|v| (0.0..=1.0).contains(v))));
        assert_ne!(a, sample_random(&s, 1024, 43).unwrap());
    }
}
