//! Event-camera 3D hand reconstruction toolkit: event streams and
//! windowing, a frame-to-event simulator, LNES and point-cloud
//! representations, hand segmentation, a MANO-style hand rig, losses,
//! metrics, a trainable reconstruction head and dataset plumbing.

mod error;
mod par;

pub mod dataset;
pub mod dvs;
pub mod events;
pub mod head;
pub mod losses;
pub mod mano;
pub mod metrics;
pub mod pgm;
pub mod repr;
pub mod segmask;

pub use error::{Error, Result};
