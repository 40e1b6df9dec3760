//! Event-camera eye tracking toolkit.

pub mod augment;
pub mod cloud;
pub mod error;
pub mod events;
pub mod heads;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod represent;
pub mod sim;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
pub use events::{Event, EventStream, Window};
pub use tensor::FrameTensor;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/events.md")]
    mod events {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/representations.md")]
    mod representations {}
    #[doc = include_str!("../../../book/src/streaming.md")]
    mod streaming {}
    #[doc = include_str!("../../../book/src/sparse.md")]
    mod sparse {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
}
