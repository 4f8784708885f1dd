use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scene::GeneratedScene;
use crate::dvs::{save_frame_dir, simulate_events, DvsConfig};
use crate::error::{Error, Result};
use crate::events::{load_events, save_events, EventStream, EventWindow, NegativeEncoding, SensorGeometry, WindowConfig};
use crate::mano::{CameraIntrinsics, HandOutput, HandPair, ManoParams};
use crate::segmask::{load_mask, save_mask, HandMask};

pub const MANIFEST_VERSION: u32 = 1;
pub const SPLIT_POLICY: &str = "by-scene";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub geometry: SensorGeometry,
    pub window: WindowConfig,
    pub split_policy: String,
    /// Share of records per split, recomputed on save.
    pub split_fractions: SplitFractions,
}

/// One window of one scene. Paths are relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub scene: String,
    pub split: Split,
    pub window_index: usize,
    pub event_file: PathBuf,
    pub gt_mask: PathBuf,
    pub gt_params: HandPair<ManoParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_output: Option<HandPair<HandOutput>>,
    pub camera: CameraIntrinsics,
}

/// Header plus records. Window `i` covers `[i·d, (i+1)·d)` microseconds,
/// `d` being the header's window duration.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
    /// Directory the record paths are relative to.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn fractions(&self) -> SplitFractions {
        let n = self.records.len().max(1) as f64;
        let count = |s| self.records.iter().filter(|r| r.split == s).count() as f64 / n;
        SplitFractions {
            train: count(Split::Train),
            val: count(Split::Val),
            test: count(Split::Test),
        }
    }

    fn check_ids(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.sample_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::parse(format!("duplicate sample_id {}", w[0])));
        }
        Ok(())
    }

    /// Appends another scene's records, rebasing their paths onto this root.
    pub fn merge(&mut self, other: DatasetManifest) -> Result<()> {
        if other.header.geometry != self.header.geometry || other.header.window != self.header.window {
            return Err(Error::config("manifests differ in geometry or window config"));
        }
        let prefix = other.root.strip_prefix(&self.root).map_err(|_| {
            Error::config(format!("{} is not below {}", other.root.display(), self.root.display()))
        })?;
        for mut r in other.records {
            r.event_file = prefix.join(&r.event_file);
            r.gt_mask = prefix.join(&r.gt_mask);
            self.records.push(r);
        }
        self.check_ids()?;
        self.header.split_fractions = self.fractions();
        Ok(())
    }
}

/// Assigns whole scenes to splits: the first `round(train·n)` scenes in
/// the given order go to train, the next `round(val·n)` to val, the rest
/// to test.
pub fn split_by_scene(scenes: &[String], fractions: SplitFractions) -> Vec<(String, Split)> {
    let n = scenes.len() as f64;
    let train = (fractions.train * n).round() as usize;
    let val = (fractions.val * n).round() as usize;
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            (s.clone(), split)
        })
        .collect()
}

/// Writes a header line followed by one JSON record per line.
pub fn save_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    manifest.check_ids()?;
    let mut header = manifest.header.clone();
    header.split_fractions = manifest.fractions();
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for r in &manifest.records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate().filter(|(_, l)| !l.as_ref().is_ok_and(|l| l.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| Error::parse("empty manifest"))?;
    let header: ManifestHeader =
        serde_json::from_str(&first?).map_err(|e| Error::parse(format!("manifest header: {e}")))?;
    if header.version != MANIFEST_VERSION {
        return Err(Error::parse(format!("unsupported manifest version {}", header.version)));
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let r = serde_json::from_str(&line?).map_err(|e| Error::parse(format!("manifest line {}: {e}", n + 1)))?;
        records.push(r);
    }
    let m = DatasetManifest {
        header,
        records,
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    m.check_ids()?;
    Ok(m)
}

/// What the loader yields per record.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub record: SampleRecord,
    /// `history_length` windows ending at the record's window, oldest first.
    pub history: Vec<EventWindow>,
    pub mask: HandMask,
}

impl Sample {
    pub fn gt_params(&self) -> &HandPair<ManoParams> {
        &self.record.gt_params
    }
}

/// Lazily loads the records of `split` (all when `None`) in manifest order.
/// Consecutive records sharing an event file reuse the parsed stream.
pub fn iterate_samples(manifest: &DatasetManifest, split: Option<Split>) -> impl Iterator<Item = Result<Sample>> + '_ {
    let mut cache: Option<(PathBuf, EventStream)> = None;
    manifest
        .records
        .iter()
        .filter(move |r| split.is_none_or(|s| r.split == s))
        .map(move |r| load_sample(manifest, r, &mut cache))
}

fn load_sample(
    manifest: &DatasetManifest,
    record: &SampleRecord,
    cache: &mut Option<(PathBuf, EventStream)>,
) -> Result<Sample> {
    let missing = |path: PathBuf| Error::MissingFile {
        sample_id: record.sample_id.clone(),
        path,
    };
    let events_path = manifest.root.join(&record.event_file);
    let mask_path = manifest.root.join(&record.gt_mask);
    for p in [&events_path, &mask_path] {
        if !p.is_file() {
            return Err(missing(p.clone()));
        }
    }
    if cache.as_ref().is_none_or(|(p, _)| p != &events_path) {
        let stream = load_events(&events_path)?;
        *cache = Some((events_path.clone(), stream));
    }
    let stream = &cache.as_ref().expect("cache filled above").1;
    let h = &manifest.header;
    if stream.geometry() != h.geometry {
        return Err(Error::GeometryMismatch {
            expected: h.geometry,
            found: stream.geometry(),
        });
    }
    let d = h.window.window_duration;
    let end = (record.window_index as i64 + 1) * d;
    let history = window_range(stream, end - h.window.history_length as i64 * d, d, h.window.history_length);
    let mask = load_mask(&mask_path, h.geometry, end)?;
    Ok(Sample {
        record: record.clone(),
        history,
        mask,
    })
}

/// `count` windows of duration `d` starting at `start`.
pub fn window_range(stream: &EventStream, start: i64, d: i64, count: usize) -> Vec<EventWindow> {
    let events = stream.events();
    (0..count as i64)
        .map(|k| {
            let (s, e) = (start + k * d, start + (k + 1) * d);
            let lo = events.partition_point(|ev| ev.t < s);
            let hi = events.partition_point(|ev| ev.t < e);
            EventWindow {
                start_t: s,
                end_t: e,
                events: events[lo..hi].to_vec(),
            }
        })
        .collect()
}

/// Files written for one scene, plus the simulated stream.
#[derive(Clone, Debug)]
pub struct WrittenScene {
    pub manifest: DatasetManifest,
    pub stream: EventStream,
}

/// Simulates events and writes `events.txt`, `frames/`, `masks/` and
/// `manifest.jsonl` under `dir`. Window `i` spans frames `i` to `i + 1`
/// and takes its ground truth from frame `i + 1`.
pub fn write_scene(
    dir: impl AsRef<Path>,
    name: &str,
    scene: &GeneratedScene,
    dvs: &DvsConfig,
    history_length: usize,
    split: Split,
) -> Result<WrittenScene> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("masks"))?;
    let stream = simulate_events(&scene.frames, dvs)?;
    save_events(dir.join("events.txt"), &stream, NegativeEncoding::MinusOne)?;
    save_frame_dir(dir.join("frames"), &scene.frames)?;
    let window = WindowConfig::new(scene.frames.frame_period(), history_length)?;
    let mut records = Vec::new();
    for (i, truth) in scene.truth.iter().enumerate().skip(1) {
        let index = i - 1;
        let mask_rel = PathBuf::from(format!("masks/mask_{index:04}.pgm"));
        save_mask(&truth.mask, dir.join(&mask_rel))?;
        records.push(SampleRecord {
            sample_id: format!("{name}/{index:04}"),
            scene: name.to_string(),
            split,
            window_index: index,
            event_file: PathBuf::from("events.txt"),
            gt_mask: mask_rel,
            gt_params: truth.params.clone(),
            gt_output: None,
            camera: scene.camera,
        });
    }
    let mut manifest = DatasetManifest {
        header: ManifestHeader {
            version: MANIFEST_VERSION,
            geometry: scene.frames.geometry(),
            window,
            split_policy: SPLIT_POLICY.into(),
            split_fractions: SplitFractions::default(),
        },
        records,
        root: dir.to_path_buf(),
    };
    manifest.header.split_fractions = manifest.fractions();
    save_manifest(dir.join("manifest.jsonl"), &manifest)?;
    Ok(WrittenScene { manifest, stream })
}
