//! Raw polarity events, stream validation and fixed-width time windowing.
//!
//! Timestamps are integer microseconds. Windows are aligned to multiples of
//! the window duration so that a window index always maps to the same span
//! of wall-clock time, independent of where the stream happens to start.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of the log-intensity change that triggered an event.
///
/// `Positive` orders before `Negative`; the simulator relies on this for its
/// tie-breaking contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// LNES channel index: 0 for positive, 1 for negative.
    #[inline]
    pub fn channel(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }

    #[inline]
    pub fn from_sign(positive: bool) -> Self {
        if positive {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventPoint {
    pub x: u32,
    pub y: u32,
    /// Microseconds.
    pub t: i64,
    pub polarity: Polarity,
}

impl EventPoint {
    pub fn new(x: u32, y: u32, t: i64, polarity: Polarity) -> Self {
        Self { x, y, t, polarity }
    }
}

/// Sensor resolution in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    /// DAVIS346 resolution.
    pub const DAVIS346: SensorGeometry = SensorGeometry {
        width: 346,
        height: 260,
    };

    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config(format!(
                "sensor geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major index of pixel `(x, y)`.
    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::DAVIS346
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Events checked against a geometry and stably sorted by timestamp.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<EventPoint>,
}

impl EventStream {
    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[EventPoint] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<EventPoint> {
        self.events
    }
}

/// Checks every event against `geometry` and stably sorts by timestamp.
pub fn validate_stream(mut events: Vec<EventPoint>, geometry: SensorGeometry) -> Result<EventStream> {
    for (i, e) in events.iter().enumerate() {
        if !geometry.contains(e.x, e.y) {
            return Err(Error::OutOfBounds(i));
        }
        if e.t < 0 {
            return Err(Error::NegativeTimestamp(i));
        }
    }
    // `sort_by_key` is stable: equal timestamps keep input order.
    events.sort_by_key(|e| e.t);
    Ok(EventStream { geometry, events })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Microseconds per window (33333 for 30 fps).
    pub window_duration: i64,
    /// Number of consecutive windows fed to segmentation.
    pub history_length: usize,
}

impl WindowConfig {
    pub fn new(window_duration: i64, history_length: usize) -> Result<Self> {
        if window_duration <= 0 {
            return Err(Error::config("window duration must be positive"));
        }
        if history_length == 0 {
            return Err(Error::config("history length must be at least 1"));
        }
        Ok(Self {
            window_duration,
            history_length,
        })
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_duration: 33_333,
            history_length: 3,
        }
    }
}

/// Events with `start_t <= t < end_t`, in stream order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventWindow {
    pub start_t: i64,
    pub end_t: i64,
    pub events: Vec<EventPoint>,
}

impl EventWindow {
    pub fn empty(start_t: i64, end_t: i64) -> Self {
        Self {
            start_t,
            end_t,
            events: Vec::new(),
        }
    }

    pub fn duration(&self) -> i64 {
        self.end_t - self.start_t
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Joins consecutive windows into one spanning first start to last end.
    ///
    /// Returns `None` for an empty slice.
    pub fn concat(windows: &[EventWindow]) -> Option<EventWindow> {
        let first = windows.first()?;
        let last = windows.last()?;
        let events = windows.iter().flat_map(|w| w.events.iter().copied()).collect();
        Some(EventWindow {
            start_t: first.start_t,
            end_t: last.end_t,
            events,
        })
    }
}

/// Splits a validated stream into contiguous windows of fixed duration.
///
/// The first window starts at the first timestamp rounded down to a multiple
/// of the duration; empty windows in the middle are kept.
pub fn partition_windows(stream: &EventStream, config: &WindowConfig) -> Vec<EventWindow> {
    let events = stream.events();
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Vec::new();
    };
    let d = config.window_duration;
    let origin = first.t.div_euclid(d) * d;
    let count = ((last.t - origin) / d + 1) as usize;
    let mut windows: Vec<EventWindow> = (0..count)
        .map(|k| {
            let start = origin + k as i64 * d;
            EventWindow::empty(start, start + d)
        })
        .collect();
    for e in events {
        let k = ((e.t - origin) / d) as usize;
        windows[k].events.push(*e);
    }
    windows
}

/// The `history` windows ending at `index`, front-padded with empty windows
/// (with correct time extents) when fewer precede it.
pub fn window_history(windows: &[EventWindow], index: usize, history: usize) -> Result<Vec<EventWindow>> {
    if index >= windows.len() {
        return Err(Error::IndexOutOfRange {
            index,
            len: windows.len(),
        });
    }
    if history == 0 {
        return Err(Error::config("history length must be at least 1"));
    }
    let d = windows[0].duration();
    let first = index as i64 + 1 - history as i64;
    Ok((first..=index as i64)
        .map(|k| {
            if k >= 0 {
                windows[k as usize].clone()
            } else {
                let start = windows[0].start_t + k * d;
                EventWindow::empty(start, start + d)
            }
        })
        .collect())
}

/// How negative polarity is written in the text format. Readers accept both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegativeEncoding {
    #[default]
    MinusOne,
    Zero,
}

const EVENTS_MAGIC: &str = "# evego-events v1";

pub fn write_events<W: Write>(mut out: W, stream: &EventStream, negative: NegativeEncoding) -> Result<()> {
    let g = stream.geometry();
    writeln!(out, "{EVENTS_MAGIC} width={} height={}", g.width, g.height)?;
    let neg = match negative {
        NegativeEncoding::MinusOne => "-1",
        NegativeEncoding::Zero => "0",
    };
    for e in stream.events() {
        let p = match e.polarity {
            Polarity::Positive => "1",
            Polarity::Negative => neg,
        };
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, p)?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(input: R) -> Result<EventStream> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::parse("empty event file"))??;
    let geometry = parse_header(&header)?;
    let mut events = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = n + 2;
        let mut fields = line.split(',');
        let mut next = |what: &str| {
            fields
                .next()
                .map(str::trim)
                .ok_or_else(|| Error::parse(format!("line {lineno}: missing {what}")))
        };
        let t: i64 = parse_field(next("t")?, lineno)?;
        let x: i64 = parse_field(next("x")?, lineno)?;
        let y: i64 = parse_field(next("y")?, lineno)?;
        let polarity = match next("polarity")? {
            "1" => Polarity::Positive,
            "0" | "-1" => Polarity::Negative,
            other => return Err(Error::parse(format!("line {lineno}: bad polarity {other:?}"))),
        };
        let index = events.len();
        // Negative coordinates can never be inside the sensor.
        let x = u32::try_from(x).map_err(|_| Error::OutOfBounds(index))?;
        let y = u32::try_from(y).map_err(|_| Error::OutOfBounds(index))?;
        events.push(EventPoint { x, y, t, polarity });
    }
    validate_stream(events, geometry)
}

fn parse_field<T: std::str::FromStr>(s: &str, lineno: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(format!("line {lineno}: expected integer, found {s:?}")))
}

fn parse_header(line: &str) -> Result<SensorGeometry> {
    let rest = line
        .strip_prefix(EVENTS_MAGIC)
        .ok_or_else(|| Error::parse(format!("missing event header, found {line:?}")))?;
    let mut width = None;
    let mut height = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("width=") {
            width = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("height=") {
            height = v.parse().ok();
        }
    }
    match (width, height) {
        (Some(w), Some(h)) => SensorGeometry::new(w, h),
        _ => Err(Error::parse(format!("header lacks width/height: {line:?}"))),
    }
}

pub fn save_events(path: impl AsRef<Path>, stream: &EventStream, negative: NegativeEncoding) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_events(&mut out, stream, negative)?;
    out.flush()?;
    Ok(())
}

pub fn load_events(path: impl AsRef<Path>) -> Result<EventStream> {
    read_events(BufReader::new(File::open(path)?))
}
