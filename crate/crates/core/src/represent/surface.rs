//! Time surfaces and memory channels.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, invalid, Result};
use crate::events::{EventStream, Window};
use crate::tensor::FrameTensor;

/// How a pixel's last-event timestamp maps to a surface value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decay {
    /// `(t_last - t_start) / (t_end - t_start)`
    Linear,
    /// `exp(-(t_end - t_last) / tau_s)`
    Exponential { tau_s: f64 },
}

/// Per-polarity time surfaces `(S_p, S_n)`, each `[H, W]` with values in
/// `[0, 1]` and zero where the pixel saw no event in the window.
pub fn time_surface(
    stream: &EventStream,
    w: Window,
    decay: Decay,
) -> Result<(FrameTensor, FrameTensor)> {
    if let Decay::Exponential { tau_s } = decay {
        if !(tau_s > 0.0 && tau_s.is_finite()) {
            return Err(invalid("time surface tau_s must be positive"));
        }
    }
    let (h, wd) = (stream.height() as usize, stream.width() as usize);
    let mut last: [Vec<Option<u64>>; 2] = [vec![None; h * wd], vec![None; h * wd]];
    for e in stream.events().iter().filter(|e| w.contains(e.t)) {
        last[!e.p as usize][e.y as usize * wd + e.x as usize] = Some(e.t);
    }
    let span = w.span_us() as f64;
    let value = |t: u64| -> f32 {
        match decay {
            Decay::Linear => ((t - w.t_start) as f64 / span) as f32,
            Decay::Exponential { tau_s } => {
                (-((w.t_end - t) as f64 * 1e-6) / tau_s).exp() as f32
            }
        }
    };
    let [pos, neg] = last.map(|plane| {
        FrameTensor::from_raw(
            vec![h, wd],
            plane.into_iter().map(|t| t.map_or(0.0, value)).collect(),
        )
    });
    Ok((pos, neg))
}

/// `(S_p + S_n) / 2` reshaped to `[1, H, W]`.
pub fn averaged_surface(s_p: &FrameTensor, s_n: &FrameTensor) -> Result<FrameTensor> {
    if s_p.dims() != s_n.dims() || s_p.rank() != 2 {
        return Err(dim_mismatch("averaged_surface", s_p.dims(), s_n.dims()));
    }
    let data = s_p
        .data()
        .iter()
        .zip(s_n.data())
        .map(|(a, b)| (a + b) * 0.5)
        .collect();
    let mut dims = vec![1];
    dims.extend_from_slice(s_p.dims());
    Ok(FrameTensor::from_raw(dims, data))
}

/// Forgetting factors used for the three memory channels by default.
pub const DEFAULT_FORGETTING: [f64; 3] = [0.8, 0.6, 0.4];

/// Three exponentially forgetting accumulations of time surfaces.
///
/// Each update computes, per channel `i` and pixel,
/// `M_i <- k_i * clamp(M_i + (S_p + S_n) / 2, 0, 1)`.
/// Values are kept in `f64` and always lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    height: usize,
    width: usize,
    forgetting: [f64; 3],
    channels: [Vec<f64>; 3],
}

impl MemoryState {
    pub fn new(height: usize, width: usize, forgetting: [f64; 3]) -> Result<Self> {
        if forgetting.iter().any(|&k| !(k > 0.0 && k < 1.0)) {
            return Err(invalid("forgetting factors must lie in (0, 1)"));
        }
        Ok(MemoryState {
            height,
            width,
            forgetting,
            channels: std::array::from_fn(|_| vec![0.0; height * width]),
        })
    }

    pub fn forgetting(&self) -> [f64; 3] {
        self.forgetting
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

pub fn memory_update(state: &MemoryState, s_p: &FrameTensor, s_n: &FrameTensor) -> Result<MemoryState> {
    let want = [state.height, state.width];
    for s in [s_p, s_n] {
        if s.dims() != want {
            return Err(dim_mismatch("memory_update", &want, s.dims()));
        }
    }
    let mut next = state.clone();
    for (ch, &k) in next.channels.iter_mut().zip(&state.forgetting) {
        for ((m, &p), &n) in ch.iter_mut().zip(s_p.data()).zip(s_n.data()) {
            *m = k * (*m + (p as f64 + n as f64) / 2.0).clamp(0.0, 1.0);
        }
    }
    Ok(next)
}

/// Memory channels stacked in forgetting-factor order as `[3, H, W]`.
pub fn memory_input(state: &MemoryState) -> FrameTensor {
    let data = state
        .channels
        .iter()
        .flat_map(|c| c.iter().map(|&v| v as f32))
        .collect();
    FrameTensor::from_raw(vec![3, state.height, state.width], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;

    #[test]
    fn surfaces() {
        let w = Window::new(0, 50_000).unwrap();
        let (p, n) = time_surface(&EventStream::empty(3, 2), w, Decay::Linear).unwrap();
        assert_eq!(p.dims(), [2, 3]);
        assert!(p.data().iter().chain(n.data()).all(|&v| v == 0.0));

        let s = EventStream::new(
            3,
            2,
            vec![
                Event::new(10_000, 1, 1, true),
                Event::new(40_000, 1, 1, true),
                Event::new(49_999, 0, 0, false),
            ],
        )
        .unwrap();
        let (p, n) = time_surface(&s, w, Decay::Linear).unwrap();
        assert!((p.get(&[1, 1]) - 0.8).abs() < 1e-7);
        assert!(n.get(&[0, 0]) > 0.9999);
        assert_eq!(n.get(&[1, 1]), 0.0);

        let (p, _) = time_surface(&s, w, Decay::Exponential { tau_s: 0.01 }).unwrap();
        assert!((p.get(&[1, 1]) as f64 - (-1.0f64).exp()).abs() < 1e-6);
        assert!(time_surface(&s, w, Decay::Exponential { tau_s: 0.0 }).is_err());
    }

    #[test]
    fn memory_fixtures() {
        let zero = MemoryState::new(2, 2, DEFAULT_FORGETTING).unwrap();
        let z = FrameTensor::zeros(&[2, 2]);
        let o = FrameTensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        assert_eq!(memory_update(&zero, &z, &z).unwrap(), zero);

        let one = memory_update(&zero, &o, &o).unwrap();
        for (i, k) in DEFAULT_FORGETTING.iter().enumerate() {
            assert!(one.channel(i).iter().all(|v| (v - k).abs() < 1e-12));
        }
        // 0.8 + 1 saturates to 1 before scaling
        let two = memory_update(&one, &o, &o).unwrap();
        assert_eq!(two, one);

        let input = memory_input(&one);
        assert_eq!(input.dims(), [3, 2, 2]);
        assert!((input.get(&[2, 0, 0]) - 0.4).abs() < 1e-7);
        assert!(memory_input(&zero).data().iter().all(|&v| v == 0.0));
        assert_eq!(memory_input(&MemoryState::new(60, 80, DEFAULT_FORGETTING).unwrap()).dims(), [3, 60, 80]);

        assert!(memory_update(&zero, &FrameTensor::zeros(&[3, 2]), &z).is_err());
        assert!(MemoryState::new(1, 1, [1.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn averaged() {
        let p = FrameTensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let n = FrameTensor::new(vec![1, 2], vec![0.0, 0.5]).unwrap();
        let a = averaged_surface(&p, &n).unwrap();
        assert_eq!(a.dims(), [1, 1, 2]);
        assert_eq!(a.data(), [0.5, 0.25]);
    }
}
