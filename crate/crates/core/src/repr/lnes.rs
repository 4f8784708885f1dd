use std::path::Path;

use crate::error::Result;
use crate::events::{EventWindow, Polarity, SensorGeometry};
use crate::pgm::{self, GrayImage};

/// Two-channel locally normalised event surface.
///
/// Each touched cell holds `(t_i - t_s) / (t_l - t_s)` for the latest event
/// that hit it, where `t_s` and `t_l` are the first and last event
/// timestamps in the window. Untouched cells are exactly zero; an activity
/// bitmap distinguishes them from cells hit by the very first event.
#[derive(Clone, Debug, PartialEq)]
pub struct LnesFrame {
    geometry: SensorGeometry,
    /// `(y * width + x) * 2 + channel`.
    data: Vec<f64>,
    active: Vec<bool>,
    pub window_start: i64,
    pub window_end: i64,
}

impl LnesFrame {
    pub fn zeros(geometry: SensorGeometry, window_start: i64, window_end: i64) -> Self {
        let n = geometry.pixel_count() * 2;
        Self {
            geometry,
            data: vec![0.0; n],
            active: vec![false; n],
            window_start,
            window_end,
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    #[inline]
    fn offset(&self, x: u32, y: u32, polarity: Polarity) -> usize {
        self.geometry.index(x, y) * 2 + polarity.channel()
    }

    pub fn get(&self, x: u32, y: u32, polarity: Polarity) -> f64 {
        self.data[self.offset(x, y, polarity)]
    }

    /// Whether any event wrote this cell.
    pub fn is_active(&self, x: u32, y: u32, polarity: Polarity) -> bool {
        self.active[self.offset(x, y, polarity)]
    }

    /// Whether any event of either polarity hit pixel `(x, y)`.
    pub fn pixel_active(&self, x: u32, y: u32) -> bool {
        let i = self.geometry.index(x, y) * 2;
        self.active[i] || self.active[i + 1]
    }

    /// Interleaved `height × width × 2` weights.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn build_lnes_frame(window: &EventWindow, geometry: SensorGeometry) -> LnesFrame {
    let mut frame = LnesFrame::zeros(geometry, window.start_t, window.end_t);
    let (Some(first), Some(last)) = (window.events.first(), window.events.last()) else {
        return frame;
    };
    let (ts, tl) = (first.t, last.t);
    let span = (tl - ts) as f64;
    for e in &window.events {
        let weight = if tl == ts { 1.0 } else { (e.t - ts) as f64 / span };
        let i = frame.offset(e.x, e.y, e.polarity);
        frame.data[i] = weight;
        frame.active[i] = true;
    }
    frame
}

/// One LNES frame per window, in order.
pub fn build_lnes(windows: &[EventWindow], geometry: SensorGeometry) -> Vec<LnesFrame> {
    windows.iter().map(|w| build_lnes_frame(w, geometry)).collect()
}

/// Positive channel as 8-bit gray, `round_half_up(weight * 255)`.
pub fn render_lnes_image(frame: &LnesFrame) -> GrayImage {
    let g = frame.geometry;
    GrayImage {
        width: g.width,
        height: g.height,
        data: frame
            .data
            .chunks_exact(2)
            .map(|cell| (cell[0] * 255.0 + 0.5).floor() as u8)
            .collect(),
    }
}

pub fn save_lnes_pgm(frame: &LnesFrame, path: impl AsRef<Path>) -> Result<()> {
    pgm::save_pgm(path, &render_lnes_image(frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventPoint;
    use proptest::prelude::*;

    fn window(events: &[(u32, u32, i64, Polarity)]) -> EventWindow {
        EventWindow {
            start_t: 0,
            end_t: 100,
            events: events
                .iter()
                .map(|&(x, y, t, p)| EventPoint::new(x, y, t, p))
                .collect(),
        }
    }

    const G: SensorGeometry = SensorGeometry { width: 8, height: 4 };
    const P: Polarity = Polarity::Positive;
    const N: Polarity = Polarity::Negative;

    #[test]
    fn evaluates_normalised_time() {
        let f = build_lnes_frame(&window(&[(0, 0, 0, P), (1, 0, 5, P), (2, 0, 10, N)]), G);
        assert_eq!(f.get(0, 0, P), 0.0);
        assert_eq!(f.get(1, 0, P), 0.5);
        assert_eq!(f.get(2, 0, N), 1.0);
        assert_eq!(f.get(2, 0, P), 0.0);
        assert!(f.is_active(0, 0, P) && !f.is_active(3, 0, P));
    }

    #[test]
    fn latest_event_wins_and_degenerate_window() {
        let f = build_lnes_frame(&window(&[(1, 1, 0, P), (1, 1, 10, P)]), G);
        assert_eq!(f.get(1, 1, P), 1.0);
        let f = build_lnes_frame(&window(&[(3, 2, 42, N)]), G);
        assert_eq!(f.get(3, 2, N), 1.0);
        let f = build_lnes_frame(&window(&[]), G);
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn render_quantization() {
        let f = build_lnes_frame(&window(&[]), G);
        assert!(render_lnes_image(&f).data.iter().all(|&v| v == 0));
        let f = build_lnes_frame(&window(&[(0, 0, 0, P), (1, 0, 5, P), (4, 3, 7, N), (2, 0, 10, P)]), G);
        let img = render_lnes_image(&f);
        assert_eq!(img.data[0], 0);
        assert_eq!(img.data[1], 128);
        assert_eq!(img.data[2], 255);
        // negative channel is not rendered
        assert_eq!(img.data[3 * 8 + 4], 0);
    }

    proptest! {
        #[test]
        fn range_and_time_shift(mut ts in proptest::collection::vec(0i64..10_000, 1..60),
                                shift in 0i64..1_000_000_000, seed in any::<u64>()) {
            ts.sort();
            let events: Vec<EventPoint> = ts.iter().enumerate().map(|(i, &t)| {
                let h = seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407));
                EventPoint::new((h >> 33) as u32 % 8, (h >> 45) as u32 % 4, t, Polarity::from_sign(h & 1 == 0))
            }).collect();
            let w = EventWindow { start_t: 0, end_t: 10_000, events: events.clone() };
            let f = build_lnes_frame(&w, G);
            prop_assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let last = events.last().unwrap();
            prop_assert_eq!(f.get(last.x, last.y, last.polarity), 1.0);

            let shifted = EventWindow {
                start_t: shift,
                end_t: shift + 10_000,
                events: events.iter().map(|e| EventPoint { t: e.t + shift, ..*e }).collect(),
            };
            let g = build_lnes_frame(&shifted, G);
            prop_assert_eq!(f.data(), g.data());
        }
    }
}
