//! Deterministic threshold DVS simulator.
//!
//! Each pixel keeps a reference log intensity. Between consecutive frames the
//! pixel fires `floor(|ΔL| / C)` events of the sign of `ΔL`, spread evenly over
//! the open inter-frame interval, and the reference advances by the emitted
//! multiple of `C`. The remainder carries into the next interval, so slow
//! ramps still fire once they accumulate a full threshold step.
//!
//! There is no noise, leak, refractory period or bandwidth limit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{validate_stream, EventPoint, EventStream, Polarity, SensorGeometry};
use crate::par;
use crate::pgm::{self, GrayImage};

/// A grayscale intensity image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayFrame {
    pub geometry: SensorGeometry,
    pub data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(geometry: SensorGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.pixel_count() {
            return Err(Error::ShapeMismatch(format!(
                "frame of {geometry} needs {} pixels, got {}",
                geometry.pixel_count(),
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("frame intensity {v} outside [0, 1]")));
        }
        Ok(Self { geometry, data })
    }

    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            geometry: img.geometry(),
            data: img.data.iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    /// Quantizes to 8 bits, rounding half up.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.geometry.width,
            height: self.geometry.height,
            data: self
                .data
                .iter()
                .map(|&v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    geometry: SensorGeometry,
    frames: Vec<GrayFrame>,
    frame_period: i64,
}

impl FrameSequence {
    /// All frames must share one geometry; `frame_period` is in microseconds.
    pub fn new(frames: Vec<GrayFrame>, frame_period: i64) -> Result<Self> {
        if frame_period <= 0 {
            return Err(Error::config("frame period must be positive"));
        }
        let geometry = frames
            .first()
            .map(|f| f.geometry)
            .ok_or_else(|| Error::config("frame sequence is empty"))?;
        if let Some(f) = frames.iter().find(|f| f.geometry != geometry) {
            return Err(Error::GeometryMismatch {
                expected: geometry,
                found: f.geometry,
            });
        }
        Ok(Self {
            geometry,
            frames,
            frame_period,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn frames(&self) -> &[GrayFrame] {
        &self.frames
    }

    pub fn frame_period(&self) -> i64 {
        self.frame_period
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Timestamp of frame `k` in microseconds.
    pub fn frame_time(&self, k: usize) -> i64 {
        k as i64 * self.frame_period
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvsConfig {
    /// Log-intensity step per event.
    pub contrast_threshold: f64,
    /// Floor added to intensity before taking the log.
    pub log_eps: f64,
    /// Reserved for stochastic variants; the threshold model ignores it.
    pub seed: u64,
}

impl Default for DvsConfig {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.2,
            log_eps: 1e-3,
            seed: 0,
        }
    }
}

impl DvsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0 && self.contrast_threshold.is_finite()) {
            return Err(Error::config("contrast threshold must be positive"));
        }
        if !(self.log_eps > 0.0 && self.log_eps.is_finite()) {
            return Err(Error::config("log epsilon must be positive"));
        }
        Ok(())
    }
}

/// Converts a frame sequence into a validated event stream.
///
/// Output is sorted by timestamp, ties broken by `(y, x, polarity)`.
pub fn simulate_events(frames: &FrameSequence, config: &DvsConfig) -> Result<EventStream> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(Error::config("simulation needs at least two frames"));
    }
    let g = frames.geometry();
    let (w, h) = (g.width as usize, g.height as usize);
    let c = config.contrast_threshold;
    let period = frames.frame_period();
    let log = |v: f64| (v + config.log_eps).ln();

    // Rows are independent; each row walks its own reference levels through
    // every interval, so the result does not depend on the thread count.
    let rows: Vec<Vec<EventPoint>> = par::map_indexed(h, |y| {
        let mut reference: Vec<f64> = frames.frames()[0].data[y * w..(y + 1) * w]
            .iter()
            .map(|&v| log(v))
            .collect();
        let mut out = Vec::new();
        for k in 0..frames.len() - 1 {
            let t0 = frames.frame_time(k);
            let next = &frames.frames()[k + 1].data[y * w..(y + 1) * w];
            for (x, (lref, &v)) in reference.iter_mut().zip(next).enumerate() {
                let delta = log(v) - *lref;
                let n = (delta.abs() / c).floor();
                if n < 1.0 {
                    continue;
                }
                let count = n as i64;
                let polarity = Polarity::from_sign(delta > 0.0);
                for j in 0..count {
                    let t = t0 + (j + 1) * period / (count + 1);
                    out.push(EventPoint::new(x as u32, y as u32, t, polarity));
                }
                *lref += delta.signum() * n * c;
            }
        }
        out
    });

    let mut events: Vec<EventPoint> = rows.into_iter().flatten().collect();
    events.sort_unstable_by_key(|e| (e.t, e.y, e.x, e.polarity));
    validate_stream(events, g)
}

const FRAME_MANIFEST: &str = "manifest.txt";

/// Reads `*.pgm` frames (in file-name order) plus `manifest.txt` holding
/// `frame_period_us=N`.
pub fn load_frame_dir(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join(FRAME_MANIFEST))?;
    let period = manifest
        .lines()
        .find_map(|l| l.trim().strip_prefix("frame_period_us="))
        .ok_or_else(|| Error::parse("frame manifest lacks frame_period_us"))?
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::parse("frame_period_us is not an integer"))?;
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    let frames = paths
        .iter()
        .map(|p| pgm::load_pgm(p).map(|img| GrayFrame::from_image(&img)))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, period)
}

pub fn save_frame_dir(dir: impl AsRef<Path>, frames: &FrameSequence) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(FRAME_MANIFEST),
        format!("frame_period_us={}\n", frames.frame_period()),
    )?;
    for (k, f) in frames.frames().iter().enumerate() {
        pgm::save_pgm(dir.join(format!("frame_{k:04}.pgm")), &f.to_image())?;
    }
    Ok(())
}
