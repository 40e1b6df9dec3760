//! Synthetic eye-movement recordings and a centroid tracking baseline.
//!
//! [`gen_trajectory`] samples a pupil-center path at the label rate,
//! [`render_events`] turns it into a DVS-style event stream by tracking the
//! log intensity of a dark disk on a bright background, and
//! [`centroid_tracker`] is a non-learned predictor for exercising the
//! metrics end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::events::{Event, EventStream};
use crate::metrics::{LabelRecord, LabelSeries, PupilPrediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Fixation,
    SmoothPursuit,
    Saccade,
    RandomWalk,
    /// Fixation with blinks at `blink_rate_hz`.
    BlinkOverlay,
}

/// Kinematics of a synthetic recording. Blinks are overlaid on any kind
/// when `blink_rate_hz > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub duration_s: f64,
    pub seed: u64,
    /// Resting pupil center in pixels.
    pub center: [f64; 2],
    /// Positions are clipped to `[0, w - 1] x [0, h - 1]`.
    pub extent: [f64; 2],
    /// Pursuit amplitude, or the half-width of the box that saccade targets
    /// and random walks stay in.
    pub amplitude_px: f64,
    pub frequency_hz: f64,
    pub saccade_rate_hz: f64,
    /// Standard deviation of one random-walk step per label sample.
    pub walk_step_px: f64,
    pub blink_rate_hz: f64,
    pub blink_duration_s: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            kind: TrajectoryKind::Fixation,
            duration_s: 1.0,
            seed: 0,
            center: [320.0, 240.0],
            extent: [640.0, 480.0],
            amplitude_px: 10.0,
            frequency_hz: 1.0,
            saccade_rate_hz: 2.0,
            walk_step_px: 1.0,
            blink_rate_hz: 0.0,
            blink_duration_s: 0.15,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.duration_s,
            self.center[0],
            self.center[1],
            self.extent[0],
            self.extent[1],
            self.amplitude_px,
            self.frequency_hz,
            self.saccade_rate_hz,
            self.walk_step_px,
            self.blink_rate_hz,
            self.blink_duration_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("trajectory parameters must be finite"));
        }
        if self.duration_s <= 0.0 {
            return Err(invalid("trajectory duration must be positive"));
        }
        if self.extent[0] < 1.0 || self.extent[1] < 1.0 {
            return Err(invalid("trajectory extent must be at least 1x1"));
        }
        let non_negative = [
            self.amplitude_px,
            self.frequency_hz,
            self.saccade_rate_hz,
            self.walk_step_px,
            self.blink_rate_hz,
            self.blink_duration_s,
        ];
        if non_negative.iter().any(|&v| v < 0.0) {
            return Err(invalid("trajectory rates and amplitudes must be >= 0"));
        }
        Ok(())
    }
}

/// Label `k` sits at `round(k * 1e6 / rate)` microseconds, for
/// `k < floor(duration * rate)`.
pub fn label_times(duration_s: f64, rate_hz: f64) -> Vec<u64> {
    let n = (duration_s * rate_hz + 1e-9).floor() as u64;
    (0..n).map(|k| (k as f64 * 1e6 / rate_hz).round() as u64).collect()
}

fn poisson_times(rng: &mut ChaCha8Rng, rate_hz: f64, duration_s: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if rate_hz <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate_hz).expect("positive rate");
    let mut t = exp.sample(rng);
    while t < duration_s {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}

pub fn gen_trajectory(spec: &TrajectorySpec, rate_hz: f64) -> Result<LabelSeries> {
    spec.validate()?;
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(invalid("label rate must be positive"));
    }
    let times = label_times(spec.duration_s, rate_hz);
    let [cx, cy] = spec.center;
    let a = spec.amplitude_px;
    let clip = |x: f64, y: f64| {
        (
            x.clamp(0.0, spec.extent[0] - 1.0),
            y.clamp(0.0, spec.extent[1] - 1.0),
        )
    };
    let in_box = |x: f64, y: f64| clip(x.clamp(cx - a, cx + a), y.clamp(cy - a, cy + a));

    let mut motion = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut blinks = ChaCha8Rng::seed_from_u64(spec.seed);
    blinks.set_stream(1);

    let positions: Vec<(f64, f64)> = match spec.kind {
        TrajectoryKind::Fixation | TrajectoryKind::BlinkOverlay => vec![clip(cx, cy); times.len()],
        TrajectoryKind::SmoothPursuit => times
            .iter()
            .map(|&t| {
                let phase = std::f64::consts::TAU * spec.frequency_hz * t as f64 * 1e-6;
                clip(cx + a * phase.sin(), cy + 0.5 * a * phase.cos())
            })
            .collect(),
        TrajectoryKind::Saccade => {
            let jumps = poisson_times(&mut motion, spec.saccade_rate_hz, spec.duration_s);
            let targets: Vec<(f64, f64)> = jumps
                .iter()
                .map(|_| {
                    let dx = if a > 0.0 { motion.random_range(-a..=a) } else { 0.0 };
                    let dy = if a > 0.0 { motion.random_range(-a..=a) } else { 0.0 };
                    clip(cx + dx, cy + dy)
                })
                .collect();
            let mut cur = clip(cx, cy);
            let mut next = 0;
            times
                .iter()
                .map(|&t| {
                    while next < jumps.len() && jumps[next] <= t as f64 * 1e-6 {
                        cur = targets[next];
                        next += 1;
                    }
                    cur
                })
                .collect()
        }
        TrajectoryKind::RandomWalk => {
            let step = Normal::new(0.0, spec.walk_step_px).map_err(|e| invalid(e.to_string()))?;
            let mut cur = clip(cx, cy);
            times
                .iter()
                .enumerate()
                .map(|(k, _)| {
                    if k > 0 {
                        cur = in_box(cur.0 + step.sample(&mut motion), cur.1 + step.sample(&mut motion));
                    }
                    cur
                })
                .collect()
        }
    };

    let blink_starts = poisson_times(&mut blinks, spec.blink_rate_hz, spec.duration_s);
    let closed = |t: f64| {
        blink_starts
            .iter()
            .any(|&b| t >= b && t < b + spec.blink_duration_s)
    };
    let records = times
        .iter()
        .zip(positions)
        .map(|(&t, (x, y))| LabelRecord {
            t,
            x,
            y,
            close: closed(t as f64 * 1e-6),
        })
        .collect();
    LabelSeries::new(records, rate_hz)
}

/// Sensor and intensity model for [`render_events`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: u16,
    pub height: u16,
    pub pupil_radius_px: f64,
    /// Linear intensities, both positive.
    pub background: f64,
    pub pupil: f64,
    /// Log-intensity contrast threshold.
    pub threshold: f64,
    /// Standard deviation of Gaussian timestamp jitter, seconds.
    pub jitter_s: f64,
    /// Internal simulation rate.
    pub sim_rate_hz: f64,
    /// Seeds the jitter.
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 640,
            height: 480,
            pupil_radius_px: 20.0,
            background: 0.6,
            pupil: 0.15,
            threshold: 0.2,
            jitter_s: 0.0,
            sim_rate_hz: 1000.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid("sensor dimensions must be non-zero"));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(invalid("contrast threshold must be positive"));
        }
        if !(self.background > 0.0 && self.pupil > 0.0 && self.background.is_finite() && self.pupil.is_finite()) {
            return Err(invalid("intensities must be positive"));
        }
        let r = self.pupil_radius_px;
        if !(r >= 0.0 && 2.0 * r + 1.0 <= self.width.min(self.height) as f64) {
            return Err(invalid("pupil must fit on the sensor"));
        }
        if !(self.jitter_s >= 0.0 && self.jitter_s.is_finite()) {
            return Err(invalid("jitter must be >= 0"));
        }
        if !(self.sim_rate_hz > 0.0 && self.sim_rate_hz.is_finite()) {
            return Err(invalid("simulation rate must be positive"));
        }
        Ok(())
    }

    /// Antialiased pupil coverage of the pixel centred at `(x, y)`.
    pub fn coverage(&self, x: f64, y: f64, cx: f64, cy: f64) -> f64 {
        let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        (self.pupil_radius_px + 0.5 - d).clamp(0.0, 1.0)
    }

    /// Log intensity of pixel `(x, y)` with the pupil at `center`, or
    /// background when the eye is closed.
    pub fn log_intensity(&self, x: usize, y: usize, center: Option<(f64, f64)>) -> f64 {
        let cov = center.map_or(0.0, |(cx, cy)| self.coverage(x as f64, y as f64, cx, cy));
        (self.background + (self.pupil - self.background) * cov).ln()
    }
}

/// Pupil state at time `t_us`: the center linearly interpolated between the
/// surrounding labels, or `None` while the eye is closed.
pub fn pupil_at(labels: &LabelSeries, t_us: u64) -> Option<(f64, f64)> {
    let r = labels.records();
    let k = r.partition_point(|l| l.t <= t_us).saturating_sub(1);
    let a = r.get(k)?;
    if a.close {
        return None;
    }
    match r.get(k + 1) {
        Some(b) if t_us > a.t => {
            let f = (t_us - a.t) as f64 / (b.t - a.t) as f64;
            Some((a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)))
        }
        _ => Some((a.x, a.y)),
    }
}

/// Internal simulation instants: multiples of the step up to the last label,
/// which is always included.
pub fn sim_times(labels: &LabelSeries, sim_rate_hz: f64) -> Vec<u64> {
    let Some(last) = labels.records().last().map(|l| l.t) else {
        return Vec::new();
    };
    let first = labels.records()[0].t;
    let step = 1e6 / sim_rate_hz;
    let mut out: Vec<u64> = (0..)
        .map(|j| first + (j as f64 * step).round() as u64)
        .take_while(|&t| t < last)
        .collect();
    out.dedup();
    out.push(last);
    out
}

/// Per-pixel contrast-threshold event generation.
///
/// Each pixel keeps a reference level on the lattice `L0 + k * threshold`,
/// where `L0` is its log intensity at the first label. Between simulation
/// instants the log intensity is interpolated linearly; every lattice
/// crossing emits an event timestamped at the interpolated crossing time
/// and moves the reference one step. Only pixels within `radius + 1` of
/// the pupil at either end of a step are visited, since no other pixel
/// changes.
pub fn render_events(labels: &LabelSeries, scene: &SceneSpec) -> Result<EventStream> {
    scene.validate()?;
    let (w, h) = (scene.width as usize, scene.height as usize);
    let times = sim_times(labels, scene.sim_rate_hz);
    if times.len() < 2 {
        return Ok(EventStream::empty(scene.width, scene.height));
    }
    let bg = scene.background.ln();
    let mut level = vec![bg; w * h];
    let reach = scene.pupil_radius_px + 1.0;
    let bbox = |c: Option<(f64, f64)>| {
        c.map(|(cx, cy)| {
            let clampx = |v: f64| v.clamp(0.0, (w - 1) as f64) as usize;
            let clampy = |v: f64| v.clamp(0.0, (h - 1) as f64) as usize;
            (
                clampx((cx - reach).floor()),
                clampx((cx + reach).ceil()),
                clampy((cy - reach).floor()),
                clampy((cy + reach).ceil()),
            )
        })
    };
    let mut prev = pupil_at(labels, times[0]);
    if let Some((x0, x1, y0, y1)) = bbox(prev) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                level[y * w + x] = scene.log_intensity(x, y, prev);
            }
        }
    }
    let base = level.clone();
    let mut steps = vec![0i32; w * h];
    let theta = scene.threshold;
    let mut events = Vec::new();

    for pair in times.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        let next = pupil_at(labels, t1);
        let boxes = [bbox(prev), bbox(next)];
        let Some((x0, x1, y0, y1)) = boxes.iter().flatten().copied().reduce(|a, b| {
            (a.0.min(b.0), a.1.max(b.1), a.2.min(b.2), a.3.max(b.3))
        }) else {
            prev = next;
            continue;
        };
        let dt = (t1 - t0) as f64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * w + x;
                let old = level[i];
                let new = scene.log_intensity(x, y, next);
                if new == old {
                    continue;
                }
                let (up, dir) = if new > old { (true, 1) } else { (false, -1) };
                loop {
                    let target = base[i] + (steps[i] + dir) as f64 * theta;
                    let crossed = if up { new >= target } else { new <= target };
                    if !crossed {
                        break;
                    }
                    steps[i] += dir;
                    let frac = (target - old) / (new - old);
                    let t = t0 + (frac * dt).floor() as u64;
                    events.push(Event::new(t.min(t1), x as u16, y as u16, up));
                }
                level[i] = new;
            }
        }
        prev = next;
    }

    if scene.jitter_s > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        let noise = Normal::new(0.0, scene.jitter_s * 1e6).map_err(|e| invalid(e.to_string()))?;
        let (lo, hi) = (times[0] as f64, *times.last().unwrap() as f64);
        for e in &mut events {
            e.t = (e.t as f64 + noise.sample(&mut rng)).round().clamp(lo, hi) as u64;
        }
    }
    events.sort_by_key(|e| e.t);
    EventStream::new(scene.width, scene.height, events)
}

/// Default confidence normalizer for [`centroid_tracker`].
pub const DEFAULT_W_REF: f64 = 100.0;

/// Exponentially weighted event centroid at each label time.
///
/// `w_i = exp(-(T - t_i) / tau_s)` over events with `t_i <= T`. When the
/// total weight drops below `1e-9` the previous prediction (initially the
/// sensor center `(W / 2, H / 2)`) is repeated with zero confidence.
pub fn centroid_tracker(stream: &EventStream, label_times: &[u64], tau_s: f64) -> Result<Vec<PupilPrediction>> {
    centroid_tracker_with(stream, label_times, tau_s, DEFAULT_W_REF)
}

pub fn centroid_tracker_with(
    stream: &EventStream,
    label_times: &[u64],
    tau_s: f64,
    w_ref: f64,
) -> Result<Vec<PupilPrediction>> {
    if !(tau_s > 0.0 && tau_s.is_finite()) {
        return Err(invalid("tracker decay must be positive"));
    }
    if !(w_ref > 0.0 && w_ref.is_finite()) {
        return Err(invalid("tracker weight reference must be positive"));
    }
    let tau_us = tau_s * 1e6;
    let ev = stream.events();
    let mut fallback = PupilPrediction {
        x: stream.width() as f64 / 2.0,
        y: stream.height() as f64 / 2.0,
        confidence: 0.0,
    };
    let (mut sw, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    let mut cursor = 0usize;
    let mut at = 0u64;
    let mut out = Vec::with_capacity(label_times.len());
    for &t in label_times {
        if t < at {
            (sw, sx, sy, cursor, at) = (0.0, 0.0, 0.0, 0, 0);
        }
        let decay = (-((t - at) as f64) / tau_us).exp();
        sw *= decay;
        sx *= decay;
        sy *= decay;
        while cursor < ev.len() && ev[cursor].t <= t {
            let e = ev[cursor];
            let wgt = (-((t - e.t) as f64) / tau_us).exp();
            sw += wgt;
            sx += wgt * e.x as f64;
            sy += wgt * e.y as f64;
            cursor += 1;
        }
        at = t;
        let p = if sw < 1e-9 {
            PupilPrediction {
                confidence: 0.0,
                ..fallback
            }
        } else {
            PupilPrediction {
                x: sx / sw,
                y: sy / sw,
                confidence: (sw / w_ref).min(1.0),
            }
        };
        fallback = p;
        out.push(p);
    }
    Ok(out)
}
