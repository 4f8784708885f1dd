//! Synthetic scenes and the on-disk sample layout:
//! `scene/{events.txt, frames/*.pgm, masks/*.pgm, manifest.jsonl}`.

mod manifest;
mod scene;

pub use manifest::{
    iterate_samples, load_manifest, save_manifest, split_by_scene, window_range, write_scene, DatasetManifest,
    ManifestHeader, Sample, SampleRecord, Split, SplitFractions, WrittenScene, MANIFEST_VERSION, SPLIT_POLICY,
};
pub use scene::{generate_synthetic_scene, BackgroundSpec, FrameTruth, GeneratedScene, HandMotion, SceneConfig};

use crate::error::{Error, Result};
use crate::events::EventWindow;
use crate::head::ToySample;
use crate::losses::HandEstimate;
use crate::mano::{forward, HandPair, HandRig};
use crate::repr::build_cloud;
use crate::segmask::filter_cloud;

/// Which events of a sample's history feed the cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudInput {
    /// Every event.
    All,
    /// Only events on pixels of the ground-truth mask.
    Masked,
}

/// Training samples for the records of `split`, with ground-truth geometry
/// posed through `rigs`. Each cloud draws with `seed`.
pub fn training_samples(
    manifest: &DatasetManifest,
    split: Option<Split>,
    rigs: &HandPair<HandRig>,
    input: CloudInput,
    budget: usize,
    seed: u64,
) -> Result<Vec<ToySample>> {
    let g = manifest.header.geometry;
    iterate_samples(manifest, split)
        .map(|s| {
            let s = s?;
            let cloud = match input {
                CloudInput::All => {
                    let all = EventWindow::concat(&s.history).ok_or_else(|| Error::config("empty history"))?;
                    build_cloud(&all, g, budget, seed)
                }
                CloudInput::Masked => filter_cloud(&s.history, &s.mask, g, budget, seed)?,
            };
            let gt = s.record.gt_params.clone().map(|side, params| -> Result<HandEstimate> {
                let rig = rigs.get(side).ok_or_else(|| Error::config(format!("no {side:?} rig")))?;
                Ok(HandEstimate {
                    output: forward(rig, &params)?,
                    params,
                })
            });
            let gt = HandPair::new(gt.left.transpose()?, gt.right.transpose()?);
            Ok(ToySample { cloud, gt })
        })
        .collect()
}
