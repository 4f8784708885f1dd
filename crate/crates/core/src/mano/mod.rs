//! MANO-style parametric hand: shape and pose blendshapes, joint regression
//! and linear blend skinning.
//!
//! Output joint convention (20 joints): the 15 articulated internal joints
//! in rig order (index, middle, pinky, ring, thumb; three each, proximal to
//! distal), followed by the 5 fingertip vertices in the rig's fingertip
//! order (thumb, index, middle, ring, pinky). The wrist, internal joint 0,
//! is reported separately for wrist-relative metrics.

mod forward;
mod obj;
mod project;
mod rig;
mod rotation;
pub mod synthetic;

pub use forward::{forward, forward_vjp, forward_with_cache, ForwardCache};
pub use obj::{read_obj, write_obj, ObjMesh};
pub use project::{project_mask, CameraIntrinsics};
pub use rig::{load_rig, save_rig, HandRig, RigParts, NUM_ARTICULATED, NUM_INTERNAL_JOINTS, NUM_OUTPUT_JOINTS};
pub use rotation::{rodrigues, rodrigues_vjp};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POSE_DIM: usize = 15;
pub const SHAPE_DIM: usize = 10;
/// θ, β, translation and root rotation packed into one vector.
pub const PARAM_DIM: usize = POSE_DIM + SHAPE_DIM + 3 + 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandSide {
    Left,
    Right,
}

/// Both hands of a sample; either may be absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandPair<T> {
    pub left: Option<T>,
    pub right: Option<T>,
}

impl<T> Default for HandPair<T> {
    fn default() -> Self {
        Self { left: None, right: None }
    }
}

impl<T> HandPair<T> {
    pub fn new(left: Option<T>, right: Option<T>) -> Self {
        Self { left, right }
    }

    pub fn both(left: T, right: T) -> Self {
        Self {
            left: Some(left),
            right: Some(right),
        }
    }

    pub fn get(&self, side: HandSide) -> Option<&T> {
        match side {
            HandSide::Left => self.left.as_ref(),
            HandSide::Right => self.right.as_ref(),
        }
    }

    pub fn as_ref(&self) -> HandPair<&T> {
        HandPair {
            left: self.left.as_ref(),
            right: self.right.as_ref(),
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(HandSide, T) -> U) -> HandPair<U> {
        HandPair {
            left: self.left.map(|v| f(HandSide::Left, v)),
            right: self.right.map(|v| f(HandSide::Right, v)),
        }
    }

    /// Present hands, left first.
    pub fn iter(&self) -> impl Iterator<Item = (HandSide, &T)> {
        self.left
            .iter()
            .map(|v| (HandSide::Left, v))
            .chain(self.right.iter().map(|v| (HandSide::Right, v)))
    }
}

/// Pose PCA coefficients, shape coefficients and rigid transform of one hand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManoParams {
    pub theta: [f64; POSE_DIM],
    pub beta: [f64; SHAPE_DIM],
    /// Meters.
    pub trans: [f64; 3],
    /// Root axis-angle, radians.
    pub rot: [f64; 3],
    pub side: HandSide,
}

impl ManoParams {
    pub fn zeros(side: HandSide) -> Self {
        Self {
            theta: [0.0; POSE_DIM],
            beta: [0.0; SHAPE_DIM],
            trans: [0.0; 3],
            rot: [0.0; 3],
            side,
        }
    }

    /// `[θ (15), β (10), t (3), R (3)]`.
    pub fn to_vector(&self) -> [f64; PARAM_DIM] {
        let mut v = [0.0; PARAM_DIM];
        v[..15].copy_from_slice(&self.theta);
        v[15..25].copy_from_slice(&self.beta);
        v[25..28].copy_from_slice(&self.trans);
        v[28..31].copy_from_slice(&self.rot);
        v
    }

    pub fn from_vector(v: &[f64], side: HandSide) -> Result<Self> {
        if v.len() != PARAM_DIM {
            return Err(Error::ShapeMismatch(format!(
                "parameter vector has {} entries, expected {PARAM_DIM}",
                v.len()
            )));
        }
        let mut p = Self::zeros(side);
        p.theta.copy_from_slice(&v[..15]);
        p.beta.copy_from_slice(&v[15..25]);
        p.trans.copy_from_slice(&v[25..28]);
        p.rot.copy_from_slice(&v[28..31]);
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Parameters that drive the mirrored rig to the x-reflected output:
    /// translation x and the rotation's y/z components change sign.
    pub fn mirrored(&self) -> Self {
        let mut p = *self;
        p.side = match self.side {
            HandSide::Left => HandSide::Right,
            HandSide::Right => HandSide::Left,
        };
        p.trans[0] = -p.trans[0];
        p.rot[1] = -p.rot[1];
        p.rot[2] = -p.rot[2];
        p
    }
}

/// Posed joints and vertices of one hand, in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandOutput {
    /// 20 joints: 15 articulated, then 5 fingertips.
    pub joints: Vec<[f64; 3]>,
    pub vertices: Vec<[f64; 3]>,
    /// Internal root joint.
    pub wrist: [f64; 3],
}

impl HandOutput {
    pub fn is_finite(&self) -> bool {
        self.joints
            .iter()
            .chain(&self.vertices)
            .chain(std::iter::once(&self.wrist))
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}
