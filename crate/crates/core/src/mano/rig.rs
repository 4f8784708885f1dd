use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{HandSide, POSE_DIM, SHAPE_DIM};
use crate::error::{Error, Result};

/// Wrist plus three joints per finger.
pub const NUM_INTERNAL_JOINTS: usize = 16;
/// Internal joints below the root.
pub const NUM_ARTICULATED: usize = NUM_INTERNAL_JOINTS - 1;
pub const NUM_OUTPUT_JOINTS: usize = NUM_ARTICULATED + 5;
/// Entries of the per-joint rotation-offset feature.
pub(crate) const POSE_FEATURES: usize = NUM_ARTICULATED * 9;
pub(crate) const ROTATION_DIM: usize = NUM_ARTICULATED * 3;

const MAGIC: &[u8; 4] = b"HRIG";
const VERSION: u32 = 1;
const WEIGHT_TOLERANCE: f64 = 1e-6;

/// Raw rig arrays, row-major.
///
/// - `shape_dirs[(v*3 + c)*10 + k]`
/// - `pose_dirs[(v*3 + c)*135 + (j-1)*9 + r*3 + s]` for rotation entry `(r, s)` of joint `j`
/// - `joint_regressor[j*nv + v]`
/// - `skinning_weights[v*16 + j]`
/// - `pose_basis[k*45 + (j-1)*3 + c]`
#[derive(Clone, Debug, PartialEq)]
pub struct RigParts {
    pub template_vertices: Vec<[f64; 3]>,
    pub shape_dirs: Vec<f64>,
    pub pose_dirs: Vec<f64>,
    pub joint_regressor: Vec<f64>,
    pub skinning_weights: Vec<f64>,
    /// `None` for the root, which must be joint 0.
    pub kinematic_parents: Vec<Option<usize>>,
    pub pose_basis: Vec<f64>,
    /// Thumb, index, middle, ring, pinky.
    pub fingertip_vertex_ids: [usize; 5],
    pub faces: Vec<[usize; 3]>,
    pub side: HandSide,
}

/// A validated rig. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct HandRig {
    parts: RigParts,
    /// Joints ordered so that every parent precedes its children.
    order: Vec<usize>,
}

fn invariant(msg: impl Into<String>) -> Error {
    Error::InvariantViolation(msg.into())
}

impl HandRig {
    pub fn new(parts: RigParts) -> Result<Self> {
        let nv = parts.template_vertices.len();
        if nv == 0 {
            return Err(invariant("rig has no vertices"));
        }
        let sizes = [
            ("shape_dirs", parts.shape_dirs.len(), nv * 3 * SHAPE_DIM),
            ("pose_dirs", parts.pose_dirs.len(), nv * 3 * POSE_FEATURES),
            ("joint_regressor", parts.joint_regressor.len(), NUM_INTERNAL_JOINTS * nv),
            ("skinning_weights", parts.skinning_weights.len(), nv * NUM_INTERNAL_JOINTS),
            ("kinematic_parents", parts.kinematic_parents.len(), NUM_INTERNAL_JOINTS),
            ("pose_basis", parts.pose_basis.len(), POSE_DIM * ROTATION_DIM),
        ];
        for (name, found, expected) in sizes {
            if found != expected {
                return Err(invariant(format!("{name} has {found} entries, expected {expected}")));
            }
        }
        let arrays: [(&str, &[f64]); 6] = [
            ("template_vertices", parts.template_vertices.as_flattened()),
            ("shape_dirs", &parts.shape_dirs),
            ("pose_dirs", &parts.pose_dirs),
            ("joint_regressor", &parts.joint_regressor),
            ("skinning_weights", &parts.skinning_weights),
            ("pose_basis", &parts.pose_basis),
        ];
        for (name, values) in arrays {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invariant(format!("{name} contains a non-finite value")));
            }
        }
        for (v, row) in parts.skinning_weights.chunks_exact(NUM_INTERNAL_JOINTS).enumerate() {
            if row.iter().any(|&w| w < 0.0) {
                return Err(invariant(format!("negative skinning weight at vertex {v}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(invariant(format!("skinning weights of vertex {v} sum to {sum}")));
            }
        }
        if let Some(&id) = parts.fingertip_vertex_ids.iter().find(|&&id| id >= nv) {
            return Err(invariant(format!("fingertip vertex {id} out of range")));
        }
        if let Some(f) = parts.faces.iter().find(|f| f.iter().any(|&i| i >= nv)) {
            return Err(invariant(format!("face {f:?} references a missing vertex")));
        }
        let order = topological_order(&parts.kinematic_parents)?;
        Ok(Self { parts, order })
    }

    pub fn parts(&self) -> &RigParts {
        &self.parts
    }

    pub fn into_parts(self) -> RigParts {
        self.parts
    }

    pub fn num_vertices(&self) -> usize {
        self.parts.template_vertices.len()
    }

    pub fn side(&self) -> HandSide {
        self.parts.side
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }

    pub(crate) fn joint_order(&self) -> &[usize] {
        &self.order
    }

    /// The rig reflected through the `x = 0` plane, for the opposite hand.
    ///
    /// Driving the result with [`ManoParams::mirrored`](super::ManoParams::mirrored)
    /// reproduces the x-negated output of this rig.
    pub fn mirrored(&self) -> HandRig {
        let s = [-1.0, 1.0, 1.0];
        let mut p = self.parts.clone();
        for v in &mut p.template_vertices {
            v[0] = -v[0];
        }
        for (i, d) in p.shape_dirs.iter_mut().enumerate() {
            *d *= s[(i / SHAPE_DIM) % 3];
        }
        for (i, d) in p.pose_dirs.iter_mut().enumerate() {
            let c = (i / POSE_FEATURES) % 3;
            let m = i % 9;
            *d *= s[c] * s[m / 3] * s[m % 3];
        }
        // Reflection conjugates an axis-angle a into (a_x, -a_y, -a_z).
        for (i, b) in p.pose_basis.iter_mut().enumerate() {
            if i % 3 != 0 {
                *b = -*b;
            }
        }
        for f in &mut p.faces {
            f.swap(1, 2);
        }
        p.side = match p.side {
            HandSide::Left => HandSide::Right,
            HandSide::Right => HandSide::Left,
        };
        HandRig {
            parts: p,
            order: self.order.clone(),
        }
    }
}

fn topological_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let n = parents.len();
    if parents[0].is_some() {
        return Err(invariant("joint 0 must be the root"));
    }
    if let Some(j) = (1..n).find(|&j| parents[j].is_none()) {
        return Err(invariant(format!("joint {j} is a second root")));
    }
    if let Some(j) = (1..n).find(|&j| parents[j].is_some_and(|p| p >= n)) {
        return Err(invariant(format!("joint {j} has an out-of-range parent")));
    }
    // Every joint must reach the root within n steps.
    let mut depth = vec![0usize; n];
    for (j, d) in depth.iter_mut().enumerate() {
        let mut cur = j;
        let mut steps = 0;
        while let Some(p) = parents[cur] {
            cur = p;
            steps += 1;
            if steps > n {
                return Err(invariant(format!("kinematic tree has a cycle through joint {j}")));
            }
        }
        *d = steps;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| depth[j]);
    Ok(order)
}

struct Section {
    tag: [u8; 4],
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn section(tag: &[u8; 4], dims: &[usize], data: Vec<f64>) -> Section {
    Section {
        tag: *tag,
        dims: dims.to_vec(),
        data,
    }
}

/// Little-endian `HRIG`, u32 version, u32 section count, then per section a
/// 4-byte tag, u32 rank, u32 dims and the f64 payload.
pub fn save_rig(rig: &HandRig, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&rig_to_bytes(rig))?;
    out.flush()?;
    Ok(())
}

pub(crate) fn rig_to_bytes(rig: &HandRig) -> Vec<u8> {
    let p = &rig.parts;
    let nv = p.template_vertices.len();
    let sections = [
        section(b"TMPL", &[nv, 3], p.template_vertices.as_flattened().to_vec()),
        section(b"SHPD", &[nv, 3, SHAPE_DIM], p.shape_dirs.clone()),
        section(b"POSD", &[nv, 3, POSE_FEATURES], p.pose_dirs.clone()),
        section(b"JREG", &[NUM_INTERNAL_JOINTS, nv], p.joint_regressor.clone()),
        section(b"SKNW", &[nv, NUM_INTERNAL_JOINTS], p.skinning_weights.clone()),
        section(
            b"PRNT",
            &[NUM_INTERNAL_JOINTS],
            p.kinematic_parents.iter().map(|q| q.map_or(-1.0, |q| q as f64)).collect(),
        ),
        section(b"PBAS", &[POSE_DIM, ROTATION_DIM], p.pose_basis.clone()),
        section(b"TIPS", &[5], p.fingertip_vertex_ids.iter().map(|&i| i as f64).collect()),
        section(
            b"FACE",
            &[p.faces.len(), 3],
            p.faces.iter().flatten().map(|&i| i as f64).collect(),
        ),
        section(
            b"SIDE",
            &[1],
            vec![match p.side {
                HandSide::Left => 0.0,
                HandSide::Right => 1.0,
            }],
        ),
    ];
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for s in &sections {
        out.extend_from_slice(&s.tag);
        out.extend_from_slice(&(s.dims.len() as u32).to_le_bytes());
        for &d in &s.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &s.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<HandRig> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    rig_from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::parse("rig container is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub(crate) fn rig_from_bytes(bytes: &[u8]) -> Result<HandRig> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::parse("not an HRIG container"));
    }
    let version = cur.u32()?;
    if version != VERSION as usize {
        return Err(Error::parse(format!("unsupported HRIG version {version}")));
    }
    let count = cur.u32()?;
    let mut sections: Vec<Section> = Vec::new();
    for _ in 0..count {
        let tag: [u8; 4] = cur.take(4)?.try_into().unwrap();
        let rank = cur.u32()?;
        let dims = (0..rank).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::parse("section size overflows"))?;
        let data = cur
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if sections.iter().any(|s| s.tag == tag) {
            return Err(Error::parse(format!("duplicate section {}", String::from_utf8_lossy(&tag))));
        }
        sections.push(Section { tag, dims, data });
    }
    if cur.pos != bytes.len() {
        return Err(Error::parse("trailing bytes after the last section"));
    }

    let mut get = |tag: &[u8; 4]| -> Result<Section> {
        let i = sections
            .iter()
            .position(|s| &s.tag == tag)
            .ok_or_else(|| Error::parse(format!("missing section {}", String::from_utf8_lossy(tag))))?;
        Ok(sections.swap_remove(i))
    };
    let tmpl = get(b"TMPL")?;
    if tmpl.dims.len() != 2 || tmpl.dims[1] != 3 {
        return Err(invariant(format!("TMPL has shape {:?}, expected [nv, 3]", tmpl.dims)));
    }
    let nv = tmpl.dims[0];
    let expect = |s: &Section, dims: &[usize]| -> Result<()> {
        if s.dims != dims {
            return Err(invariant(format!(
                "{} has shape {:?}, expected {dims:?}",
                String::from_utf8_lossy(&s.tag),
                s.dims
            )));
        }
        Ok(())
    };
    let shpd = get(b"SHPD")?;
    expect(&shpd, &[nv, 3, SHAPE_DIM])?;
    let posd = get(b"POSD")?;
    expect(&posd, &[nv, 3, POSE_FEATURES])?;
    let jreg = get(b"JREG")?;
    expect(&jreg, &[NUM_INTERNAL_JOINTS, nv])?;
    let sknw = get(b"SKNW")?;
    expect(&sknw, &[nv, NUM_INTERNAL_JOINTS])?;
    let prnt = get(b"PRNT")?;
    expect(&prnt, &[NUM_INTERNAL_JOINTS])?;
    let pbas = get(b"PBAS")?;
    expect(&pbas, &[POSE_DIM, ROTATION_DIM])?;
    let tips = get(b"TIPS")?;
    expect(&tips, &[5])?;
    let face = get(b"FACE")?;
    if face.dims.len() != 2 || face.dims[1] != 3 {
        return Err(invariant(format!("FACE has shape {:?}, expected [nf, 3]", face.dims)));
    }
    let side = get(b"SIDE")?;
    expect(&side, &[1])?;

    let index = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(Error::parse(format!("{v} is not a valid index")))
        }
    };
    let kinematic_parents = prnt
        .data
        .iter()
        .map(|&v| if v == -1.0 { Ok(None) } else { index(v).map(Some) })
        .collect::<Result<Vec<_>>>()?;
    let mut fingertip_vertex_ids = [0usize; 5];
    for (o, &v) in fingertip_vertex_ids.iter_mut().zip(&tips.data) {
        *o = index(v)?;
    }
    let faces = face
        .data
        .chunks_exact(3)
        .map(|c| Ok([index(c[0])?, index(c[1])?, index(c[2])?]))
        .collect::<Result<Vec<_>>>()?;
    let side = match side.data[0] {
        0.0 => HandSide::Left,
        1.0 => HandSide::Right,
        v => return Err(Error::parse(format!("invalid side code {v}"))),
    };
    HandRig::new(RigParts {
        template_vertices: tmpl.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        shape_dirs: shpd.data,
        pose_dirs: posd.data,
        joint_regressor: jreg.data,
        skinning_weights: sknw.data,
        kinematic_parents,
        pose_basis: pbas.data,
        fingertip_vertex_ids,
        faces,
        side,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mano::synthetic::mini_rig;

    #[test]
    fn container_roundtrip() {
        let rig = mini_rig(HandSide::Right);
        let back = rig_from_bytes(&rig_to_bytes(&rig)).unwrap();
        assert_eq!(back, rig);
    }

    #[test]
    fn bad_weight_row_is_rejected() {
        let mut parts = mini_rig(HandSide::Right).into_parts();
        let row = &mut parts.skinning_weights[3 * NUM_INTERNAL_JOINTS..4 * NUM_INTERNAL_JOINTS];
        let scale = 0.9 / row.iter().sum::<f64>();
        row.iter_mut().for_each(|w| *w *= scale);
        assert!(matches!(HandRig::new(parts.clone()), Err(Error::InvariantViolation(_))));

        // Same failure through the container.
        let rig = HandRig { order: (0..16).collect(), parts };
        assert!(matches!(rig_from_bytes(&rig_to_bytes(&rig)), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn truncation_is_a_parse_error() {
        let bytes = rig_to_bytes(&mini_rig(HandSide::Left));
        for cut in [0, 3, 11, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(rig_from_bytes(&bytes[..cut]), Err(Error::Parse(_))), "cut at {cut}");
        }
    }

    #[test]
    fn tree_checks() {
        let mut parts = mini_rig(HandSide::Right).into_parts();
        parts.kinematic_parents[5] = None;
        assert!(HandRig::new(parts.clone()).is_err());
        parts.kinematic_parents[5] = Some(6);
        parts.kinematic_parents[6] = Some(5);
        assert!(matches!(HandRig::new(parts), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn out_of_order_parents_are_accepted() {
        // Reparent the pinky chain so a child has a smaller index than its parent.
        let mut parts = mini_rig(HandSide::Right).into_parts();
        parts.kinematic_parents[7] = Some(8);
        parts.kinematic_parents[8] = Some(0);
        let rig = HandRig::new(parts).unwrap();
        let pos = |j: usize| rig.joint_order().iter().position(|&o| o == j).unwrap();
        assert!(pos(8) < pos(7));
    }
}
