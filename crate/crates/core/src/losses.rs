//! Mask losses (BCE, Dice) and hand losses (joints, vertices, interhand,
//! MANO parameters) with their weighting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::SensorGeometry;
use crate::mano::{HandOutput, HandPair, ManoParams};
use crate::segmask::HandMask;

pub const BCE_CLAMP: f64 = 1e-7;
pub const DICE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskLossWeights {
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
}

impl Default for MaskLossWeights {
    fn default() -> Self {
        Self {
            lambda_alpha: 0.7,
            lambda_beta: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandLossWeights {
    /// Joints.
    pub lambda_gamma: f64,
    /// Interhand.
    pub lambda_delta: f64,
    /// Vertices.
    pub lambda_epsilon: f64,
    /// MANO parameters.
    pub lambda_zeta: f64,
}

impl Default for HandLossWeights {
    fn default() -> Self {
        Self {
            lambda_gamma: 0.1,
            lambda_delta: 1.0,
            lambda_epsilon: 1.0,
            lambda_zeta: 20.0,
        }
    }
}

impl HandLossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_gamma, self.lambda_delta, self.lambda_epsilon, self.lambda_zeta];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!("hand loss weights must be non-negative: {w:?}")));
        }
        Ok(())
    }
}

/// Per-pixel hand probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelProbMap {
    geometry: SensorGeometry,
    values: Vec<f64>,
}

impl PixelProbMap {
    pub fn new(geometry: SensorGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.pixel_count() {
            return Err(Error::ShapeMismatch(format!(
                "probability map of {geometry} needs {} values, got {}",
                geometry.pixel_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvariantViolation(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { geometry, values })
    }

    pub fn uniform(geometry: SensorGeometry, p: f64) -> Result<Self> {
        Self::new(geometry, vec![p; geometry.pixel_count()])
    }

    /// Hard 0/1 probabilities.
    pub fn from_mask(mask: &HandMask) -> Self {
        Self {
            geometry: mask.geometry(),
            values: mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check(pred: &PixelProbMap, gt: &HandMask) -> Result<()> {
    if pred.geometry != gt.geometry() {
        return Err(Error::GeometryMismatch {
            expected: gt.geometry(),
            found: pred.geometry,
        });
    }
    Ok(())
}

pub fn bce_loss(pred: &PixelProbMap, gt: &HandMask) -> Result<f64> {
    check(pred, gt)?;
    let sum: f64 = pred
        .values
        .iter()
        .zip(gt.data())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / pred.values.len() as f64)
}

pub fn dice_loss(pred: &PixelProbMap, gt: &HandMask) -> Result<f64> {
    check(pred, gt)?;
    let (mut inter, mut sy, mut sp) = (0.0, 0.0, 0.0);
    for (&p, &y) in pred.values.iter().zip(gt.data()) {
        let y = if y { 1.0 } else { 0.0 };
        inter += y * p;
        sy += y;
        sp += p;
    }
    Ok(1.0 - (2.0 * inter + DICE_EPS) / (sy + sp + DICE_EPS))
}

pub fn mask_loss(pred: &PixelProbMap, gt: &HandMask, w: &MaskLossWeights) -> Result<f64> {
    Ok(w.lambda_alpha * bce_loss(pred, gt)? + w.lambda_beta * dice_loss(pred, gt)?)
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::ShapeMismatch(format!("{what}: {a} predicted vs {b} ground-truth points")));
    }
    Ok(())
}

/// Mean over points of the 1-norm of the 3D difference.
pub fn point_l1_loss(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    same_len(pred.len(), gt.len(), "point sets differ")?;
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).abs() + (p[1] - g[1]).abs() + (p[2] - g[2]).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn joints_loss(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    point_l1_loss(pred, gt)
}

pub fn vertices_loss(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    point_l1_loss(pred, gt)
}

/// Mean Euclidean error of the left-to-right joint offsets.
pub fn interhand_loss(
    pred_left: &[[f64; 3]],
    pred_right: &[[f64; 3]],
    gt_left: &[[f64; 3]],
    gt_right: &[[f64; 3]],
) -> Result<f64> {
    same_len(pred_left.len(), gt_left.len(), "left joints")?;
    same_len(pred_right.len(), gt_right.len(), "right joints")?;
    same_len(pred_left.len(), pred_right.len(), "left vs right joints")?;
    let mut sum = 0.0;
    for i in 0..pred_left.len() {
        let mut sq = 0.0;
        for c in 0..3 {
            let d = (pred_left[i][c] - pred_right[i][c]) - (gt_left[i][c] - gt_right[i][c]);
            sq += d * d;
        }
        sum += sq.sqrt();
    }
    Ok(sum / pred_left.len() as f64)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `‖θ̂ − θ‖₂ + ‖β̂ − β‖₂` for one hand.
pub fn mano_loss(pred: &ManoParams, gt: &ManoParams) -> Result<f64> {
    if pred.side != gt.side {
        return Err(Error::SideMismatch);
    }
    Ok(l2(&pred.theta, &gt.theta) + l2(&pred.beta, &gt.beta))
}

/// Parameters and posed geometry of one hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandEstimate {
    pub params: ManoParams,
    pub output: HandOutput,
}

/// Individual terms and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HandLossBreakdown {
    pub joints: f64,
    pub interhand: f64,
    pub vertices: f64,
    pub mano: f64,
    pub total: f64,
}

impl HandLossBreakdown {
    pub fn weighted(joints: f64, interhand: f64, vertices: f64, mano: f64, w: &HandLossWeights) -> Self {
        Self {
            joints,
            interhand,
            vertices,
            mano,
            total: w.lambda_gamma * joints + w.lambda_delta * interhand + w.lambda_epsilon * vertices + w.lambda_zeta * mano,
        }
    }
}

/// Joint and vertex terms are averaged over the hands present in the
/// ground truth, the MANO term is summed over them, and the interhand term
/// only applies when both hands are present.
pub fn total_hand_loss(
    pred: &HandPair<HandEstimate>,
    gt: &HandPair<HandEstimate>,
    w: &HandLossWeights,
) -> Result<HandLossBreakdown> {
    let (mut joints, mut vertices, mut mano, mut hands) = (0.0, 0.0, 0.0, 0usize);
    for (side, g) in gt.iter() {
        let p = pred
            .get(side)
            .ok_or_else(|| Error::ShapeMismatch(format!("no {side:?} prediction for a ground-truth hand")))?;
        joints += joints_loss(&p.output.joints, &g.output.joints)?;
        vertices += vertices_loss(&p.output.vertices, &g.output.vertices)?;
        mano += mano_loss(&p.params, &g.params)?;
        hands += 1;
    }
    if hands == 0 {
        return Ok(HandLossBreakdown::default());
    }
    let interhand = match (&pred.left, &pred.right, &gt.left, &gt.right) {
        (Some(pl), Some(pr), Some(gl), Some(gr)) => {
            interhand_loss(&pl.output.joints, &pr.output.joints, &gl.output.joints, &gr.output.joints)?
        }
        _ => 0.0,
    };
    let n = hands as f64;
    Ok(HandLossBreakdown::weighted(joints / n, interhand, vertices / n, mano, w))
}
