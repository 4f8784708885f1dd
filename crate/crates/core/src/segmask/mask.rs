use std::path::Path;

use crate::error::{Error, Result};
use crate::events::SensorGeometry;
use crate::pgm::{self, GrayImage};

/// Binary hand-region image for one timestamp.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandMask {
    geometry: SensorGeometry,
    data: Vec<bool>,
    /// Start of the latest window the mask describes, in microseconds.
    pub timestamp: i64,
}

impl HandMask {
    pub fn empty(geometry: SensorGeometry, timestamp: i64) -> Self {
        Self {
            geometry,
            data: vec![false; geometry.pixel_count()],
            timestamp,
        }
    }

    pub fn full(geometry: SensorGeometry, timestamp: i64) -> Self {
        Self {
            geometry,
            data: vec![true; geometry.pixel_count()],
            timestamp,
        }
    }

    pub fn from_fn(geometry: SensorGeometry, timestamp: i64, f: impl Fn(u32, u32) -> bool) -> Self {
        let data = (0..geometry.height)
            .flat_map(|y| (0..geometry.width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            geometry,
            data,
            timestamp,
        }
    }

    pub fn from_data(geometry: SensorGeometry, timestamp: i64, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.pixel_count() {
            return Err(Error::ShapeMismatch(format!(
                "mask of {geometry} needs {} cells, got {}",
                geometry.pixel_count(),
                data.len()
            )));
        }
        Ok(Self {
            geometry,
            data,
            timestamp,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[self.geometry.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.geometry.index(x, y);
        self.data[i] = value;
    }

    /// Row-major cells.
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_subset_of(&self, other: &HandMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Square (Chebyshev) dilation by `radius` pixels.
    pub fn dilate(&self, radius: u32) -> HandMask {
        let g = self.geometry;
        let r = radius as i64;
        HandMask::from_fn(g, self.timestamp, |x, y| {
            let (x, y) = (x as i64, y as i64);
            (y - r..=y + r).any(|yy| {
                (x - r..=x + r).any(|xx| {
                    xx >= 0
                        && yy >= 0
                        && xx < g.width as i64
                        && yy < g.height as i64
                        && self.get(xx as u32, yy as u32)
                })
            })
        })
    }

    pub(crate) fn check_geometry(&self, expected: SensorGeometry) -> Result<()> {
        if self.geometry != expected {
            return Err(Error::GeometryMismatch {
                expected,
                found: self.geometry,
            });
        }
        Ok(())
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.geometry.width,
            height: self.geometry.height,
            data: self.data.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        }
    }
}

/// `|pred ∧ gt| / |pred ∨ gt|`, defined as 1 when both are empty.
pub fn iou(pred: &HandMask, gt: &HandMask) -> Result<f64> {
    pred.check_geometry(gt.geometry)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Writes the mask as a PGM with 0 / 255 values.
pub fn save_mask(mask: &HandMask, path: impl AsRef<Path>) -> Result<()> {
    pgm::save_pgm(path, &mask.to_image())
}

/// Reads a PGM mask; any nonzero pixel is hand.
pub fn load_mask(path: impl AsRef<Path>, geometry: SensorGeometry, timestamp: i64) -> Result<HandMask> {
    let img = pgm::load_pgm(path)?;
    if img.geometry() != geometry {
        return Err(Error::GeometryMismatch {
            expected: geometry,
            found: img.geometry(),
        });
    }
    HandMask::from_data(geometry, timestamp, img.data.iter().map(|&v| v != 0).collect())
}
