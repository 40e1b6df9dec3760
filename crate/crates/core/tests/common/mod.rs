#![allow(dead_code)]

use evgaze::{Event, EventStream};
use proptest::prelude::*;

/// Random sorted stream on a small sensor; timestamps below `max_t`.
pub fn stream(max_w: u16, max_h: u16, max_events: usize, max_t: u64) -> impl Strategy<Value = EventStream> {
    (1..=max_w, 1..=max_h).prop_flat_map(move |(w, h)| {
        prop::collection::vec((0..max_t, 0..w, 0..h, any::<bool>()), 0..=max_events).prop_map(move |mut raw| {
            raw.sort_by_key(|r| r.0);
            let ev = raw.into_iter().map(|(t, x, y, p)| Event::new(t, x, y, p)).collect();
            EventStream::new(w, h, ev).unwrap()
        })
    })
}

pub fn valid(s: &EventStream) -> bool {
    EventStream::new(s.width(), s.height(), s.events().to_vec()).is_ok()
}
