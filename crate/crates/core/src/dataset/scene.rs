use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dvs::{FrameSequence, GrayFrame};
use crate::error::{Error, Result};
use crate::events::SensorGeometry;
use crate::mano::{forward, project_mask, CameraIntrinsics, HandPair, HandRig, HandSide, ManoParams, POSE_DIM, SHAPE_DIM};
use crate::segmask::HandMask;

/// Linear motion of one hand between the first and the last frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandMotion {
    pub side: HandSide,
    /// Meters, camera frame.
    pub trans_start: [f64; 3],
    pub trans_end: [f64; 3],
    /// Flexion applied to every pose coefficient, radians.
    pub curl_start: f64,
    pub curl_end: f64,
    pub rot: [f64; 3],
    pub beta: [f64; SHAPE_DIM],
}

impl HandMotion {
    pub fn params_at(&self, s: f64) -> ManoParams {
        let lerp = |a: f64, b: f64| a + (b - a) * s;
        ManoParams {
            theta: [lerp(self.curl_start, self.curl_end); POSE_DIM],
            beta: self.beta,
            trans: [0, 1, 2].map(|i| lerp(self.trans_start[i], self.trans_end[i])),
            rot: self.rot,
            side: self.side,
        }
    }
}

/// Product of two sinusoids translating at a constant pixel velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// Pixels.
    pub wavelength: f64,
    pub mean: f64,
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    pub geometry: SensorGeometry,
    pub frames: usize,
    /// Microseconds.
    pub frame_period: i64,
    pub hands: Vec<HandMotion>,
    pub background: BackgroundSpec,
    pub hand_intensity: f64,
    /// Drives the texture phase.
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("scene {}: {m}", self.name)));
        if self.frames < 2 {
            return bad("needs at least two frames");
        }
        if self.frame_period <= 0 {
            return bad("frame period must be positive");
        }
        if self.hands.len() > 2 || (self.hands.len() == 2 && self.hands[0].side == self.hands[1].side) {
            return bad("at most one hand per side");
        }
        let b = &self.background;
        if !(b.wavelength > 0.0) || b.mean - b.contrast < 0.0 || b.mean + b.contrast > 1.0 {
            return bad("background must stay within [0, 1] with a positive wavelength");
        }
        if !(0.0..=1.0).contains(&self.hand_intensity) {
            return bad("hand intensity outside [0, 1]");
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a plain directory name");
        }
        Ok(())
    }

    fn base(name: &str, seed: u64) -> Self {
        Self {
            name: name.into(),
            geometry: SensorGeometry { width: 128, height: 96 },
            frames: 13,
            frame_period: 33_333,
            hands: Vec::new(),
            background: BackgroundSpec {
                velocity: [0.0, 0.0],
                wavelength: 14.0,
                mean: 0.45,
                contrast: 0.2,
            },
            hand_intensity: 0.9,
            seed,
        }
    }

    fn right_hand(trans_start: [f64; 3], trans_end: [f64; 3], curl: (f64, f64)) -> HandMotion {
        HandMotion {
            side: HandSide::Right,
            trans_start,
            trans_end,
            curl_start: curl.0,
            curl_end: curl.1,
            rot: [0.0; 3],
            beta: [0.0; SHAPE_DIM],
        }
    }

    /// A small right hand drifting and curling while the whole background
    /// slides, as seen from a head-mounted camera.
    pub fn egocentric(seed: u64) -> Self {
        Self {
            hands: vec![Self::right_hand([0.02, 0.05, 1.2], [0.045, 0.04, 1.2], (0.0, 0.3))],
            background: BackgroundSpec {
                velocity: [1.5, 0.5],
                ..Self::base("", 0).background
            },
            ..Self::base("egocentric", seed)
        }
    }

    pub fn moving_hand_static_background(seed: u64) -> Self {
        Self {
            hands: vec![Self::right_hand([-0.03, 0.04, 0.8], [0.02, 0.03, 0.8], (0.0, 0.25))],
            ..Self::base("moving-hand", seed)
        }
    }

    pub fn static_hand_moving_background(seed: u64) -> Self {
        Self {
            hands: vec![Self::right_hand([0.0, 0.04, 0.8], [0.0, 0.04, 0.8], (0.2, 0.2))],
            background: BackgroundSpec {
                velocity: [1.5, 0.5],
                ..Self::base("", 0).background
            },
            ..Self::base("moving-background", seed)
        }
    }

    pub fn static_scene(seed: u64) -> Self {
        Self {
            hands: vec![Self::right_hand([0.0, 0.04, 0.8], [0.0, 0.04, 0.8], (0.2, 0.2))],
            ..Self::base("static", seed)
        }
    }

    /// Two articulating hands over a sliding background; `frames - 1`
    /// training windows.
    pub fn two_hands(seed: u64) -> Self {
        let mut left = Self::right_hand([-0.12, 0.05, 0.7], [-0.09, 0.03, 0.7], (0.1, 0.5));
        left.side = HandSide::Left;
        Self {
            hands: vec![left, Self::right_hand([0.10, 0.04, 0.7], [0.08, 0.06, 0.7], (0.4, 0.0))],
            frames: 9,
            background: BackgroundSpec {
                velocity: [1.0, -0.5],
                ..Self::base("", 0).background
            },
            ..Self::base("two-hands", seed)
        }
    }
}

/// Ground truth at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTruth {
    pub params: HandPair<ManoParams>,
    pub mask: HandMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    pub frames: FrameSequence,
    pub truth: Vec<FrameTruth>,
    pub camera: CameraIntrinsics,
}

/// Renders the hand silhouettes (flat `hand_intensity`) over the moving
/// texture and records per-frame parameters and masks. Intensities are
/// quantized to 8 bits so the saved frames reproduce the same events.
pub fn generate_synthetic_scene(config: &SceneConfig, rigs: &HandPair<HandRig>) -> Result<GeneratedScene> {
    config.validate()?;
    let g = config.geometry;
    let camera = CameraIntrinsics::for_geometry(g);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let phase: [f64; 2] = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
    let b = &config.background;
    let quantize = |v: f64| (v * 255.0).round() / 255.0;

    let mut frames = Vec::with_capacity(config.frames);
    let mut truth = Vec::with_capacity(config.frames);
    for k in 0..config.frames {
        let s = k as f64 / (config.frames - 1) as f64;
        let mut params = HandPair::default();
        let mut mask = HandMask::empty(g, config.frame_period * k as i64);
        for m in &config.hands {
            let p = m.params_at(s);
            let rig = rigs
                .get(m.side)
                .ok_or_else(|| Error::config(format!("no {:?} rig for the scene", m.side)))?;
            let out = forward(rig, &p)?;
            let hand = project_mask(&out, rig.faces(), &camera, g);
            for (i, &v) in hand.data().iter().enumerate() {
                if v {
                    mask.set(i as u32 % g.width, i as u32 / g.width, true);
                }
            }
            match m.side {
                HandSide::Left => params.left = Some(p),
                HandSide::Right => params.right = Some(p),
            }
        }
        let (ox, oy) = (b.velocity[0] * k as f64, b.velocity[1] * k as f64);
        let mut data = Vec::with_capacity(g.pixel_count());
        for y in 0..g.height {
            for x in 0..g.width {
                let v = if mask.get(x, y) {
                    config.hand_intensity
                } else {
                    let u = TAU * (x as f64 - ox) / b.wavelength + phase[0];
                    let w = TAU * (y as f64 - oy) / b.wavelength + phase[1];
                    b.mean + b.contrast * u.sin() * w.cos()
                };
                data.push(quantize(v));
            }
        }
        frames.push(GrayFrame::new(g, data)?);
        truth.push(FrameTruth { params, mask });
    }
    Ok(GeneratedScene {
        frames: FrameSequence::new(frames, config.frame_period)?,
        truth,
        camera,
    })
}
