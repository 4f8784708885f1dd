//! Hand masks: a predictor interface with a density baseline, mask-guided
//! event-cloud filtering and IoU.

mod density;
mod filter;
mod mask;

pub use density::{predict_mask_density, DensityMaskPredictor, DensityParams, FileMaskPredictor, MaskPredictor};
pub use filter::{filter_cloud, filter_events};
pub use mask::{iou, load_mask, save_mask, HandMask};
