use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::mask::{load_mask, HandMask};
use crate::error::{Error, Result};
use crate::events::{Polarity, SensorGeometry};
use crate::repr::LnesFrame;

/// Produces one hand mask for the latest of `T` LNES frames.
pub trait MaskPredictor: Send + Sync {
    fn predict(&self, frames: &[LnesFrame]) -> Result<HandMask>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    /// Box-blur radius in pixels.
    pub blur_radius: usize,
    /// Fraction of the peak blurred density a pixel must reach.
    pub density_threshold: f64,
    /// Components smaller than this many pixels are dropped.
    pub min_component_area: usize,
    /// At most this many of the largest components are kept.
    pub max_components: usize,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            blur_radius: 4,
            density_threshold: 0.5,
            min_component_area: 50,
            max_components: 2,
        }
    }
}

/// Event-density heuristic standing in for a learned segmentation network.
#[derive(Clone, Debug, Default)]
pub struct DensityMaskPredictor {
    pub params: DensityParams,
}

impl MaskPredictor for DensityMaskPredictor {
    fn predict(&self, frames: &[LnesFrame]) -> Result<HandMask> {
        predict_mask_density(frames, &self.params)
    }
}

/// Reads a precomputed mask (ground truth or an external network's output).
#[derive(Clone, Debug)]
pub struct FileMaskPredictor {
    pub path: PathBuf,
    pub geometry: SensorGeometry,
}

impl MaskPredictor for FileMaskPredictor {
    fn predict(&self, frames: &[LnesFrame]) -> Result<HandMask> {
        let ts = frames.last().map_or(0, |f| f.window_start);
        load_mask(&self.path, self.geometry, ts)
    }
}

/// Accumulates event presence over all frames and both polarities, box-blurs
/// it, thresholds relative to the peak and keeps the largest 4-connected
/// components.
pub fn predict_mask_density(frames: &[LnesFrame], params: &DensityParams) -> Result<HandMask> {
    let latest = frames
        .last()
        .ok_or_else(|| Error::config("mask prediction needs at least one frame"))?;
    let g = latest.geometry();
    if let Some(f) = frames.iter().find(|f| f.geometry() != g) {
        return Err(Error::GeometryMismatch {
            expected: g,
            found: f.geometry(),
        });
    }
    let (w, h) = (g.width as usize, g.height as usize);

    let mut presence = vec![0u32; w * h];
    for f in frames {
        for y in 0..g.height {
            for x in 0..g.width {
                for p in [Polarity::Positive, Polarity::Negative] {
                    if f.is_active(x, y, p) {
                        presence[g.index(x, y)] += 1;
                    }
                }
            }
        }
    }

    let density = box_sum(&presence, w, h, params.blur_radius);
    let peak = density.iter().copied().max().unwrap_or(0);
    let mut mask = HandMask::empty(g, latest.window_start);
    if peak == 0 {
        return Ok(mask);
    }
    let cut = params.density_threshold * peak as f64;
    let on: Vec<bool> = density.iter().map(|&d| d > 0 && d as f64 >= cut).collect();

    let mut comps = components(&on, w, h);
    comps.retain(|c| c.len() >= params.min_component_area);
    // Stable sort: equal areas keep scan order.
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    for comp in comps.iter().take(params.max_components) {
        for &i in comp {
            mask.set((i % w) as u32, (i / w) as u32, true);
        }
    }
    Ok(mask)
}

/// Sum over the `(2r+1)²` neighbourhood, clipped at the border.
fn box_sum(values: &[u32], w: usize, h: usize, r: usize) -> Vec<u64> {
    // Integral image with a zero row and column in front.
    let mut integral = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += values[y * w + x] as u64;
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let at = |x: usize, y: usize| integral[y * (w + 1) + x];
    let mut out = vec![0u64; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            out[y * w + x] = at(x1, y1) + at(x0, y0) - at(x0, y1) - at(x1, y0);
        }
    }
    out
}

/// 4-connected components in scan order of their first pixel.
fn components(on: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; on.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if on[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{EventPoint, EventWindow};
    use crate::repr::build_lnes_frame;

    const G: SensorGeometry = SensorGeometry { width: 80, height: 60 };

    fn frame(pixels: &[(u32, u32)]) -> LnesFrame {
        let events = pixels
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| EventPoint::new(x, y, i as i64, Polarity::Positive))
            .collect();
        build_lnes_frame(
            &EventWindow {
                start_t: 0,
                end_t: 100_000,
                events,
            },
            G,
        )
    }

    fn blob(x0: u32, y0: u32, size: u32) -> Vec<(u32, u32)> {
        (y0..y0 + size).flat_map(|y| (x0..x0 + size).map(move |x| (x, y))).collect()
    }

    /// Brute-force blur + threshold, then union-find labelling.
    fn oracle_components(frames: &[LnesFrame], p: &DensityParams) -> (Vec<bool>, Vec<usize>) {
        let (w, h) = (G.width as i64, G.height as i64);
        let pres = |x: i64, y: i64| -> u64 {
            frames
                .iter()
                .map(|f| f.is_active(x as u32, y as u32, Polarity::Positive) as u64 + f.is_active(x as u32, y as u32, Polarity::Negative) as u64)
                .sum()
        };
        let r = p.blur_radius as i64;
        let mut dens = vec![0u64; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0;
                for yy in (y - r).max(0)..=(y + r).min(h - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                        s += pres(xx, yy);
                    }
                }
                dens[(y * w + x) as usize] = s;
            }
        }
        let peak = *dens.iter().max().unwrap() as f64;
        let on: Vec<bool> = dens.iter().map(|&d| d > 0 && d as f64 >= p.density_threshold * peak).collect();
        let mut parent: Vec<usize> = (0..on.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if !on[i] {
                    continue;
                }
                for j in [if x + 1 < w { Some(i + 1) } else { None }, if y + 1 < h { Some(i + w as usize) } else { None }]
                    .into_iter()
                    .flatten()
                {
                    if on[j] {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        parent[a] = b;
                    }
                }
            }
        }
        let labels = (0..on.len()).map(|i| find(&mut parent, i)).collect();
        (on, labels)
    }

    #[test]
    fn empty_frames_give_empty_mask() {
        let frames = vec![frame(&[]), frame(&[]), frame(&[])];
        let m = predict_mask_density(&frames, &DensityParams::default()).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn dense_blob_survives_isolated_pixels_do_not() {
        let mut px = blob(30, 20, 20);
        let isolated = [(2, 2), (70, 5), (5, 55), (75, 50), (60, 40)];
        px.extend(isolated);
        let frames = vec![frame(&px), frame(&px), frame(&px)];
        let params = DensityParams {
            min_component_area: 50,
            ..Default::default()
        };
        let m = predict_mask_density(&frames, &params).unwrap();

        let (on, labels) = oracle_components(&frames, &params);
        let centre = (30 * G.width as usize) + 40;
        let expected: Vec<bool> = (0..on.len()).map(|i| on[i] && labels[i] == labels[centre]).collect();
        assert_eq!(m.data(), expected.as_slice());
        for (x, y) in isolated {
            assert!(!m.get(x, y));
        }
    }

    #[test]
    fn component_ranking_keeps_requested_count() {
        let mut px = blob(5, 5, 15);
        px.extend(blob(50, 30, 15));
        px.extend(blob(40, 5, 8));
        let frames = vec![frame(&px)];
        let base = DensityParams {
            blur_radius: 1,
            density_threshold: 0.3,
            min_component_area: 10,
            max_components: 2,
        };
        let (on, labels) = oracle_components(&frames, &base);
        // Rank components by size with the oracle labelling.
        let mut sizes = std::collections::BTreeMap::new();
        for i in 0..on.len() {
            if on[i] {
                *sizes.entry(labels[i]).or_insert(0usize) += 1;
            }
        }
        let mut ranked: Vec<(usize, usize)> = sizes.into_iter().map(|(l, s)| (s, l)).collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0));
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0].0, ranked[1].0);

        let m = predict_mask_density(&frames, &base).unwrap();
        let keep: Vec<usize> = ranked[..2].iter().map(|r| r.1).collect();
        let expected: Vec<bool> = (0..on.len()).map(|i| on[i] && keep.contains(&labels[i])).collect();
        assert_eq!(m.data(), expected.as_slice());

        let one = predict_mask_density(&frames, &DensityParams { max_components: 1, ..base }).unwrap();
        assert_eq!(one.count(), ranked[0].0);
    }

    #[test]
    fn geometry_mismatch_is_reported() {
        let other = LnesFrame::zeros(SensorGeometry::DAVIS346, 0, 1);
        assert!(matches!(
            predict_mask_density(&[other, frame(&[])], &DensityParams::default()),
            Err(Error::GeometryMismatch { .. })
        ));
        assert!(predict_mask_density(&[], &DensityParams::default()).is_err());
    }
}
