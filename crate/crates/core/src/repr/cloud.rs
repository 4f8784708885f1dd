use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{EventPoint, EventWindow, Polarity, SensorGeometry};

pub const DEFAULT_BUDGET: usize = 2048;

const CLOUD_MAGIC: &[u8; 4] = b"EVCL";

/// One event as a 5-feature point `(x, y, t, p, n)`, all in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CloudPoint {
    pub x: f32,
    pub y: f32,
    pub t: f32,
    pub p: f32,
    pub n: f32,
}

impl CloudPoint {
    pub fn features(&self) -> [f32; 5] {
        [self.x, self.y, self.t, self.p, self.n]
    }
}

/// Exactly `budget` points; the first `validity` are real events in
/// timestamp order and the rest are all-zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct EventCloud {
    points: Vec<CloudPoint>,
    validity: usize,
}

impl EventCloud {
    pub fn empty(budget: usize) -> Self {
        Self {
            points: vec![CloudPoint::default(); budget],
            validity: 0,
        }
    }

    /// Pads `real` with zero points up to `budget`.
    pub fn from_real_points(mut real: Vec<CloudPoint>, budget: usize) -> Result<Self> {
        if real.len() > budget {
            return Err(Error::ShapeMismatch(format!(
                "{} real points exceed the budget of {budget}",
                real.len()
            )));
        }
        let validity = real.len();
        real.resize(budget, CloudPoint::default());
        Ok(Self { points: real, validity })
    }

    pub fn budget(&self) -> usize {
        self.points.len()
    }

    pub fn validity(&self) -> usize {
        self.validity
    }

    pub fn points(&self) -> &[CloudPoint] {
        &self.points
    }

    pub fn real_points(&self) -> &[CloudPoint] {
        &self.points[..self.validity]
    }

    /// Little-endian `EVCL`, u32 budget, u32 validity, then `budget × 5` f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.points.len() * 20);
        out.extend_from_slice(CLOUD_MAGIC);
        out.extend_from_slice(&(self.points.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.validity as u32).to_le_bytes());
        for p in &self.points {
            for v in p.features() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != CLOUD_MAGIC {
            return Err(Error::parse("not an EVCL container"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (budget, validity) = (word(4), word(8));
        if validity > budget {
            return Err(Error::parse(format!("validity {validity} exceeds budget {budget}")));
        }
        let body = &bytes[12..];
        if body.len() != budget * 20 {
            return Err(Error::parse(format!(
                "EVCL body has {} bytes, expected {}",
                body.len(),
                budget * 20
            )));
        }
        let points = body
            .chunks_exact(20)
            .map(|row| {
                let f = |k: usize| f32::from_le_bytes(row[k * 4..k * 4 + 4].try_into().unwrap());
                CloudPoint {
                    x: f(0),
                    y: f(1),
                    t: f(2),
                    p: f(3),
                    n: f(4),
                }
            })
            .collect();
        Ok(Self { points, validity })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Sorted indices of a seeded uniform sample of `budget` out of `count`
/// without replacement; all indices when `count <= budget`.
pub fn sample_indices(count: usize, budget: usize, seed: u64) -> Vec<usize> {
    if count <= budget {
        return (0..count).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, count, budget).into_vec();
    idx.sort_unstable();
    idx
}

/// Builds a cloud from time-ordered `events`, normalising time over
/// `[span_start, span_end)`.
pub fn cloud_from_events(
    events: &[EventPoint],
    span_start: i64,
    span_end: i64,
    geometry: SensorGeometry,
    budget: usize,
    seed: u64,
) -> EventCloud {
    let sx = (geometry.width.max(2) - 1) as f64;
    let sy = (geometry.height.max(2) - 1) as f64;
    let span = (span_end - span_start) as f64;
    let real = sample_indices(events.len(), budget, seed)
        .into_iter()
        .map(|i| {
            let e = &events[i];
            let t = if span > 0.0 { (e.t - span_start) as f64 / span } else { 0.0 };
            let positive = e.polarity == Polarity::Positive;
            CloudPoint {
                x: (e.x as f64 / sx) as f32,
                y: (e.y as f64 / sy) as f32,
                t: t as f32,
                p: if positive { 1.0 } else { 0.0 },
                n: if positive { 0.0 } else { 1.0 },
            }
        })
        .collect();
    EventCloud::from_real_points(real, budget).expect("sample never exceeds budget")
}

pub fn build_cloud(window: &EventWindow, geometry: SensorGeometry, budget: usize, seed: u64) -> EventCloud {
    cloud_from_events(&window.events, window.start_t, window.end_t, geometry, budget, seed)
}
