//! WebAssembly bindings for a single-page demo. The page renders LNES
//! frames of a synthetic egocentric scene, the density mask with its
//! filtering statistics, and a hand silhouette driven by pose sliders.
//!
//! Everything here is plain Rust returning bytes or strings, so the same
//! code runs in native tests.

use evego::dataset::{generate_synthetic_scene, SceneConfig};
use evego::dvs::{simulate_events, DvsConfig};
use evego::events::{EventStream, EventWindow, SensorGeometry};
use evego::mano::{forward, project_mask, synthetic, CameraIntrinsics, HandPair, HandRig, HandSide, ManoParams};
use evego::repr::build_lnes_frame;
use evego::segmask::{filter_events, iou, predict_mask_density, DensityParams, HandMask};
use evego::repr::LnesFrame;
use wasm_bindgen::prelude::*;

const HISTORY: usize = 3;

#[wasm_bindgen]
pub struct Demo {
    geometry: SensorGeometry,
    windows: Vec<EventWindow>,
    truth: Vec<HandMask>,
    rig: HandRig,
    camera: CameraIntrinsics,
}

fn rgba(geometry: SensorGeometry, mut pixel: impl FnMut(u32, u32) -> [u8; 3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(geometry.pixel_count() * 4);
    for y in 0..geometry.height {
        for x in 0..geometry.width {
            let [r, g, b] = pixel(x, y);
            out.extend_from_slice(&[r, g, b, 255]);
        }
    }
    out
}

#[wasm_bindgen]
impl Demo {
    /// Generates and simulates the egocentric scene for `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, String> {
        let rigs = HandPair::new(None, Some(synthetic::standard_rig(HandSide::Right)));
        let cfg = SceneConfig::egocentric(seed as u64);
        let scene = generate_synthetic_scene(&cfg, &rigs).map_err(|e| e.to_string())?;
        let stream: EventStream = simulate_events(&scene.frames, &DvsConfig::default()).map_err(|e| e.to_string())?;
        let p = cfg.frame_period;
        let windows = evego::dataset::window_range(&stream, 0, p, cfg.frames - 1);
        Ok(Demo {
            geometry: cfg.geometry,
            windows,
            truth: scene.truth.into_iter().skip(1).map(|t| t.mask).collect(),
            rig: rigs.right.expect("right rig"),
            camera: scene.camera,
        })
    }

    pub fn width(&self) -> u32 {
        self.geometry.width
    }

    pub fn height(&self) -> u32 {
        self.geometry.height
    }

    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    fn frame(&self, index: usize) -> LnesFrame {
        build_lnes_frame(&self.windows[index.min(self.windows.len() - 1)], self.geometry)
    }

    /// LNES of one window: positive events in red, negative in blue.
    pub fn lnes_rgba(&self, index: usize) -> Vec<u8> {
        let f = self.frame(index);
        let d = f.data();
        let w = self.geometry.width as usize;
        rgba(self.geometry, |x, y| {
            let i = (y as usize * w + x as usize) * 2;
            [(d[i] * 255.0).round() as u8, 0, (d[i + 1] * 255.0).round() as u8]
        })
    }

    fn predicted(&self, index: usize, blur_radius: usize, threshold: f64) -> Result<HandMask, String> {
        let index = index.min(self.windows.len() - 1);
        let first = (index + 1).saturating_sub(HISTORY);
        let frames: Vec<LnesFrame> = (first..=index).map(|k| self.frame(k)).collect();
        let params = DensityParams {
            blur_radius,
            density_threshold: threshold,
            ..DensityParams::default()
        };
        predict_mask_density(&frames, &params).map_err(|e| e.to_string())
    }

    /// Density mask over the LNES history: green predicted, magenta ground
    /// truth, white where both agree.
    pub fn mask_rgba(&self, index: usize, blur_radius: usize, threshold: f64) -> Result<Vec<u8>, String> {
        let pred = self.predicted(index, blur_radius, threshold)?;
        let gt = &self.truth[index.min(self.truth.len() - 1)];
        Ok(rgba(self.geometry, |x, y| match (pred.get(x, y), gt.get(x, y)) {
            (true, true) => [255, 255, 255],
            (true, false) => [40, 200, 80],
            (false, true) => [200, 40, 200],
            (false, false) => [16, 16, 16],
        }))
    }

    /// JSON with event counts before and after filtering by the predicted
    /// mask and the mask IoU against ground truth.
    pub fn filter_stats(&self, index: usize, blur_radius: usize, threshold: f64) -> Result<String, String> {
        let index = index.min(self.windows.len() - 1);
        let pred = self.predicted(index, blur_radius, threshold)?;
        let gt = &self.truth[index];
        let window = std::slice::from_ref(&self.windows[index]);
        let kept = filter_events(window, &pred, self.geometry).map_err(|e| e.to_string())?.len();
        let in_gt = filter_events(window, gt, self.geometry).map_err(|e| e.to_string())?.len();
        let score = iou(&pred, gt).map_err(|e| e.to_string())?;
        Ok(serde_json::json!({
            "total": self.windows[index].len(),
            "kept": kept,
            "in_ground_truth_mask": in_gt,
            "iou": score,
        })
        .to_string())
    }

    /// Silhouette of the right hand for a uniform finger curl, a yaw about
    /// the camera's vertical axis and a depth in meters.
    pub fn hand_rgba(&self, curl: f64, yaw: f64, depth: f64) -> Vec<u8> {
        let mask = self.hand_mask(curl, yaw, depth);
        rgba(self.geometry, |x, y| if mask.get(x, y) { [240, 200, 150] } else { [24, 24, 32] })
    }

    /// Pixel count of the silhouette for the same sliders.
    pub fn hand_area(&self, curl: f64, yaw: f64, depth: f64) -> usize {
        self.hand_mask(curl, yaw, depth).count()
    }
}

impl Demo {
    fn hand_mask(&self, curl: f64, yaw: f64, depth: f64) -> HandMask {
        let mut p = ManoParams::zeros(HandSide::Right);
        p.theta = [curl; 15];
        p.rot = [0.0, yaw, 0.0];
        p.trans = [0.0, 0.06, depth.max(0.05)];
        match forward(&self.rig, &p) {
            Ok(out) => project_mask(&out, self.rig.faces(), &self.camera, self.geometry),
            Err(_) => HandMask::empty(self.geometry, 0),
        }
    }
}
