//! Event representations: LNES frames for segmentation and fixed-budget
//! event clouds for reconstruction.

mod cloud;
mod lnes;

pub use cloud::{build_cloud, cloud_from_events, sample_indices, CloudPoint, EventCloud, DEFAULT_BUDGET};
pub use lnes::{build_lnes, build_lnes_frame, render_lnes_image, save_lnes_pgm, LnesFrame};
