//! Procedural license-free rigs: a 778-vertex hand with the standard
//! topology size and a 16-vertex stick hand for fast tests.
//!
//! Both are right hands built in meters with the wrist at the origin,
//! fingers pointing along -y and flexion (positive pose coefficients)
//! curling toward +z. Left hands come from [`HandRig::mirrored`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rig::{HandRig, RigParts, NUM_INTERNAL_JOINTS, POSE_FEATURES, ROTATION_DIM};
use super::{HandSide, POSE_DIM, SHAPE_DIM};

struct Finger {
    /// Internal joint indices, proximal to distal.
    joints: [usize; 3],
    base: [f64; 3],
    dir: [f64; 3],
    lengths: [f64; 3],
    radius: f64,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn axpy(a: f64, x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

impl Finger {
    /// In-plane axis perpendicular to the finger; rotating about it curls the finger toward +z.
    fn flex_axis(&self) -> [f64; 3] {
        normalize(cross(self.dir, [0.0, 0.0, 1.0]))
    }

    fn normal(&self) -> [f64; 3] {
        cross(self.flex_axis(), self.dir)
    }

    /// Joint positions: MCP, PIP, DIP, then the tip.
    fn joint_positions(&self) -> [[f64; 3]; 4] {
        let mut out = [self.base; 4];
        for s in 0..3 {
            out[s + 1] = axpy(self.lengths[s], self.dir, out[s]);
        }
        out
    }
}

/// Kinematic order: index, middle, pinky, ring, thumb.
fn fingers() -> [Finger; 5] {
    let f = |j: usize, base: [f64; 3], dir: [f64; 3], lengths: [f64; 3], radius: f64| Finger {
        joints: [j, j + 1, j + 2],
        base,
        dir: normalize(dir),
        lengths,
        radius,
    };
    [
        f(1, [0.027, -0.092, 0.0], [0.08, -1.0, 0.0], [0.040, 0.025, 0.020], 0.0085),
        f(4, [0.009, -0.095, 0.0], [0.0, -1.0, 0.0], [0.045, 0.028, 0.021], 0.009),
        f(7, [-0.027, -0.085, 0.0], [-0.12, -1.0, 0.0], [0.032, 0.020, 0.018], 0.0075),
        f(10, [-0.009, -0.092, 0.0], [-0.05, -1.0, 0.0], [0.042, 0.026, 0.020], 0.0085),
        f(13, [0.035, -0.020, 0.005], [0.7, -0.7, -0.15], [0.038, 0.030, 0.024], 0.010),
    ]
}

/// Fingertip order expected by the output convention.
const TIP_ORDER: [usize; 5] = [4, 0, 1, 3, 2];

fn parents() -> Vec<Option<usize>> {
    let mut p = vec![None; NUM_INTERNAL_JOINTS];
    for f in fingers() {
        p[f.joints[0]] = Some(0);
        p[f.joints[1]] = Some(f.joints[0]);
        p[f.joints[2]] = Some(f.joints[1]);
    }
    p
}

fn pose_basis() -> Vec<f64> {
    let mut basis = vec![0.0; POSE_DIM * ROTATION_DIM];
    for f in fingers() {
        let axis = f.flex_axis();
        for &j in &f.joints {
            let k = j - 1;
            basis[k * ROTATION_DIM + k * 3..][..3].copy_from_slice(&axis);
        }
    }
    basis
}

struct Builder {
    vertices: Vec<[f64; 3]>,
    weights: Vec<[f64; NUM_INTERNAL_JOINTS]>,
    /// Finger index and distance along the finger, for shape directions.
    finger_of: Vec<Option<(usize, f64)>>,
    regressor: Vec<f64>,
    faces: Vec<[usize; 3]>,
}

impl Builder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            weights: Vec::new(),
            finger_of: Vec::new(),
            regressor: Vec::new(),
            faces: Vec::new(),
        }
    }

    fn push(&mut self, v: [f64; 3], influences: &[(usize, f64)], finger: Option<(usize, f64)>) -> usize {
        let mut w = [0.0; NUM_INTERNAL_JOINTS];
        for &(j, x) in influences {
            w[j] += x;
        }
        self.vertices.push(v);
        self.weights.push(w);
        self.finger_of.push(finger);
        self.vertices.len() - 1
    }

    fn regress(&mut self, joint: usize, ids: &[usize]) {
        let nv = self.vertices.len();
        if self.regressor.is_empty() {
            self.regressor = vec![0.0; NUM_INTERNAL_JOINTS * nv];
        }
        let w = 1.0 / ids.len() as f64;
        for &i in ids {
            self.regressor[joint * nv + i] += w;
        }
    }

    fn quad_strip(&mut self, a: &[usize], b: &[usize]) {
        let n = a.len();
        for i in 0..n {
            let k = (i + 1) % n;
            self.faces.push([a[i], a[k], b[k]]);
            self.faces.push([a[i], b[k], b[i]]);
        }
    }

    fn fan(&mut self, centre: usize, ring: &[usize], reverse: bool) {
        let n = ring.len();
        for i in 0..n {
            let k = (i + 1) % n;
            self.faces.push(if reverse { [centre, ring[k], ring[i]] } else { [centre, ring[i], ring[k]] });
        }
    }

    fn finish(self, tips: [usize; 5], seed: u64) -> HandRig {
        let nv = self.vertices.len();
        let mut shape_dirs = vec![0.0; nv * 3 * SHAPE_DIM];
        let fs = fingers();
        for (v, p) in self.vertices.iter().enumerate() {
            let mut set = |c: usize, k: usize, x: f64| shape_dirs[(v * 3 + c) * SHAPE_DIM + k] = x;
            for c in 0..3 {
                // Overall size about the wrist.
                set(c, 0, 0.1 * p[c]);
            }
            match self.finger_of[v] {
                Some((f, along)) => {
                    for c in 0..3 {
                        set(c, 1, 0.15 * along * fs[f].dir[c]);
                    }
                    set(0, 2, 0.15 * fs[f].base[0]);
                }
                None => set(0, 2, 0.15 * p[0]),
            }
            for k in 3..SHAPE_DIM {
                let phase = k as f64 * 0.7;
                let s = ((k as f64) * 9.0 * p[0] + (k as f64 - 2.0) * 7.0 * p[1] + 5.0 * p[2] + phase).sin();
                set(k % 3, k, 0.003 * s);
            }
        }

        // Small pose correctives, local to the joints that move each vertex.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pose_dirs = vec![0.0; nv * 3 * POSE_FEATURES];
        for (v, w) in self.weights.iter().enumerate() {
            for j in 1..NUM_INTERNAL_JOINTS {
                for c in 0..3 {
                    for m in 0..9 {
                        let x: f64 = rng.gen_range(-1.0..1.0);
                        if w[j] > 0.0 {
                            pose_dirs[(v * 3 + c) * POSE_FEATURES + (j - 1) * 9 + m] = 5e-4 * x;
                        }
                    }
                }
            }
        }

        HandRig::new(RigParts {
            template_vertices: self.vertices,
            shape_dirs,
            pose_dirs,
            joint_regressor: self.regressor,
            skinning_weights: self.weights.into_iter().flatten().collect(),
            kinematic_parents: parents(),
            pose_basis: pose_basis(),
            fingertip_vertex_ids: tips,
            faces: self.faces,
            side: HandSide::Right,
        })
        .expect("synthetic rig satisfies the rig invariants")
    }
}

const PALM_RINGS: usize = 11;
const PALM_SEGMENTS: usize = 21;
const PALM_LENGTH: f64 = 0.09;
const FINGER_SEGMENTS: usize = 12;
const RINGS_PER_BONE: usize = 3;

/// 778 vertices: a closed palm tube (11 rings of 21 plus two cap centres)
/// and five fingers of 9 rings of 12 plus a tip vertex.
fn standard_right() -> HandRig {
    let mut b = Builder::new();
    let mut pending: Vec<(usize, Vec<usize>)> = Vec::new();

    let bottom = b.push([0.0; 3], &[(0, 1.0)], None);
    let mut palm_rings = Vec::new();
    for r in 0..PALM_RINGS {
        let y = -PALM_LENGTH * r as f64 / (PALM_RINGS - 1) as f64;
        let ax = 0.036 + 0.008 * r as f64 / (PALM_RINGS - 1) as f64;
        let ring: Vec<usize> = (0..PALM_SEGMENTS)
            .map(|i| {
                let phi = std::f64::consts::TAU * i as f64 / PALM_SEGMENTS as f64;
                b.push([ax * phi.cos(), y, 0.012 * phi.sin()], &[(0, 1.0)], None)
            })
            .collect();
        palm_rings.push(ring);
    }
    let top = b.push([0.0, -PALM_LENGTH, 0.0], &[(0, 1.0)], None);
    pending.push((0, palm_rings[0].clone()));
    b.fan(bottom, &palm_rings[0], true);
    for r in 0..PALM_RINGS - 1 {
        let (lo, hi) = (palm_rings[r].clone(), palm_rings[r + 1].clone());
        b.quad_strip(&lo, &hi);
    }
    b.fan(top, &palm_rings[PALM_RINGS - 1].clone(), false);

    let mut tips = [0usize; 5];
    for (fi, f) in fingers().iter().enumerate() {
        let (u, n) = (f.flex_axis(), f.normal());
        let pos = f.joint_positions();
        let total: f64 = f.lengths.iter().sum();
        let mut rings: Vec<Vec<usize>> = Vec::new();
        let mut along = 0.0;
        for bone in 0..3 {
            let parent = if bone == 0 { 0 } else { f.joints[bone - 1] };
            let joint = f.joints[bone];
            for k in 0..RINGS_PER_BONE {
                let frac = k as f64 / RINGS_PER_BONE as f64;
                let centre = axpy(frac * f.lengths[bone], f.dir, pos[bone]);
                let dist = along + frac * f.lengths[bone];
                let radius = f.radius * (1.0 - 0.25 * dist / total);
                let influences: &[(usize, f64)] = if k == 0 { &[(parent, 0.5), (joint, 0.5)] } else { &[(joint, 1.0)] };
                let ring: Vec<usize> = (0..FINGER_SEGMENTS)
                    .map(|i| {
                        let psi = std::f64::consts::TAU * i as f64 / FINGER_SEGMENTS as f64;
                        let p = axpy(radius * psi.sin(), n, axpy(radius * psi.cos(), u, centre));
                        b.push(p, influences, Some((fi, dist)))
                    })
                    .collect();
                if k == 0 {
                    pending.push((joint, ring.clone()));
                }
                rings.push(ring);
            }
            along += f.lengths[bone];
        }
        for r in 0..rings.len() - 1 {
            let (lo, hi) = (rings[r].clone(), rings[r + 1].clone());
            b.quad_strip(&lo, &hi);
        }
        let tip = b.push(pos[3], &[(f.joints[2], 1.0)], Some((fi, total)));
        b.fan(tip, &rings[rings.len() - 1].clone(), true);
        let slot = TIP_ORDER.iter().position(|&o| o == fi).unwrap();
        tips[slot] = tip;
    }
    // Each joint sits at the centre of its ring.
    for (joint, ring) in &pending {
        b.regress(*joint, ring);
    }
    debug_assert_eq!(b.vertices.len(), 778);
    b.finish(tips, 0x5eed_0778)
}

/// Wrist vertex plus MCP, PIP and tip vertices per finger.
fn mini_right() -> HandRig {
    let mut b = Builder::new();
    let wrist = b.push([0.0; 3], &[(0, 1.0)], None);
    let mut tips = [0usize; 5];
    let mut bases = Vec::new();
    let mut regress = vec![(0usize, vec![wrist])];
    for (fi, f) in fingers().iter().enumerate() {
        let pos = f.joint_positions();
        let [j1, j2, j3] = f.joints;
        let mcp = b.push(pos[0], &[(0, 0.5), (j1, 0.5)], Some((fi, 0.0)));
        let pip = b.push(pos[1], &[(j1, 0.5), (j2, 0.5)], Some((fi, f.lengths[0])));
        let tip = b.push(pos[3], &[(j3, 1.0)], Some((fi, f.lengths.iter().sum())));
        regress.push((j1, vec![mcp]));
        regress.push((j2, vec![pip]));
        regress.push((j3, vec![pip, tip]));
        bases.push(mcp);
        tips[TIP_ORDER.iter().position(|&o| o == fi).unwrap()] = tip;
        b.faces.push([mcp, pip, tip]);
    }
    for (j, ids) in &regress {
        b.regress(*j, ids);
    }
    // Palm fan across the finger bases in x order: thumb, index, middle, ring, pinky.
    let order = [4, 0, 1, 3, 2].map(|i| bases[i]);
    for w in order.windows(2) {
        b.faces.push([wrist, w[0], w[1]]);
    }
    b.finish(tips, 0x5eed_0016)
}

/// The 778-vertex procedural rig for either hand.
pub fn standard_rig(side: HandSide) -> HandRig {
    let right = standard_right();
    match side {
        HandSide::Right => right,
        HandSide::Left => right.mirrored(),
    }
}

/// The 16-vertex procedural rig for either hand.
pub fn mini_rig(side: HandSide) -> HandRig {
    let right = mini_right();
    match side {
        HandSide::Right => right,
        HandSide::Left => right.mirrored(),
    }
}
