use serde::{Deserialize, Serialize};

use super::HandOutput;
use crate::events::SensorGeometry;
use crate::segmask::HandMask;

/// Pinhole intrinsics in pixels. Pixel `(x, y)` has its centre at the
/// integer coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Roughly 60° horizontal field of view, principal point at the centre.
    pub fn for_geometry(g: SensorGeometry) -> Self {
        let f = 0.87 * g.width as f64;
        Self {
            fx: f,
            fy: f,
            cx: (g.width as f64 - 1.0) / 2.0,
            cy: (g.height as f64 - 1.0) / 2.0,
        }
    }

    /// `None` when the point is not in front of the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        (p[2] > 0.0).then(|| [self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy])
    }
}

/// Rasterises the filled triangles of a posed mesh. Faces with any vertex
/// at `z <= 0` are culled; pixel centres on an edge count as covered.
pub fn project_mask(
    output: &HandOutput,
    faces: &[[usize; 3]],
    camera: &CameraIntrinsics,
    geometry: SensorGeometry,
) -> HandMask {
    let mut mask = HandMask::empty(geometry, 0);
    let projected: Vec<Option<[f64; 2]>> = output.vertices.iter().map(|&v| camera.project(v)).collect();
    for f in faces {
        let (Some(a), Some(b), Some(c)) = (projected[f[0]], projected[f[1]], projected[f[2]]) else {
            continue;
        };
        fill_triangle(&mut mask, a, b, c);
    }
    mask
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

pub(crate) fn fill_triangle(mask: &mut HandMask, a: [f64; 2], b: [f64; 2], c: [f64; 2]) {
    let area = edge(a, b, c);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let g = mask.geometry();
    let lo = |v: f64| v.ceil().max(0.0);
    let x0 = lo(a[0].min(b[0]).min(c[0]));
    let y0 = lo(a[1].min(b[1]).min(c[1]));
    let x1 = a[0].max(b[0]).max(c[0]).floor().min(g.width as f64 - 1.0);
    let y1 = a[1].max(b[1]).max(c[1]).floor().min(g.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let sign = area.signum();
    for y in y0 as u32..=y1 as u32 {
        for x in x0 as u32..=x1 as u32 {
            let p = [x as f64, y as f64];
            if sign * edge(a, b, p) >= 0.0 && sign * edge(b, c, p) >= 0.0 && sign * edge(c, a, p) >= 0.0 {
                mask.set(x, y, true);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mano::synthetic::standard_rig;
    use crate::mano::{forward, HandSide, ManoParams};

    const G: SensorGeometry = SensorGeometry { width: 64, height: 48 };

    fn tri_output(pts: [[f64; 3]; 3]) -> HandOutput {
        HandOutput {
            joints: vec![],
            vertices: pts.to_vec(),
            wrist: [0.0; 3],
        }
    }

    /// Barycentric point-in-triangle test on every pixel.
    fn oracle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Vec<bool> {
        let mut out = Vec::new();
        for y in 0..G.height {
            for x in 0..G.width {
                let (px, py) = (x as f64, y as f64);
                let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
                let l1 = ((b[1] - c[1]) * (px - c[0]) + (c[0] - b[0]) * (py - c[1])) / det;
                let l2 = ((c[1] - a[1]) * (px - c[0]) + (a[0] - c[0]) * (py - c[1])) / det;
                let l3 = 1.0 - l1 - l2;
                out.push(l1 >= -1e-12 && l2 >= -1e-12 && l3 >= -1e-12);
            }
        }
        out
    }

    #[test]
    fn single_triangle_matches_brute_force() {
        let cam = CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 10.0,
            cy: 5.0,
        };
        // Depth 1 so pixel coordinates are 100 * (x, y) + (cx, cy).
        for (pts, winding) in [
            ([[0.03, 0.02, 1.0], [0.41, 0.107, 1.0], [0.155, 0.383, 1.0]], "ccw"),
            ([[0.03, 0.02, 1.0], [0.155, 0.383, 1.0], [0.41, 0.107, 1.0]], "cw"),
            ([[-0.2, -0.1, 1.0], [0.9, 0.0, 1.0], [0.1, 0.9, 1.0]], "clipped"),
        ] {
            let m = project_mask(&tri_output(pts), &[[0, 1, 2]], &cam, G);
            let p: Vec<[f64; 2]> = pts.iter().map(|&v| cam.project(v).unwrap()).collect();
            assert_eq!(m.data(), oracle(p[0], p[1], p[2]).as_slice(), "{winding}");
            assert!(m.count() > 0);
        }
    }

    #[test]
    fn behind_camera_is_empty() {
        let cam = CameraIntrinsics::for_geometry(G);
        let out = tri_output([[0.0, 0.0, -1.0], [0.1, 0.0, -1.0], [0.0, 0.1, -0.5]]);
        assert_eq!(project_mask(&out, &[[0, 1, 2]], &cam, G).count(), 0);
        let straddling = tri_output([[0.0, 0.0, 1.0], [0.1, 0.0, 1.0], [0.0, 0.1, 0.0]]);
        assert_eq!(project_mask(&straddling, &[[0, 1, 2]], &cam, G).count(), 0);
    }

    #[test]
    fn moving_closer_never_shrinks_the_silhouette() {
        let g = SensorGeometry::DAVIS346;
        let rig = standard_rig(HandSide::Right);
        let cam = CameraIntrinsics::for_geometry(g);
        let rest = forward(&rig, &ManoParams::zeros(HandSide::Right)).unwrap();
        // Centre the hand on the optical axis.
        let n = rest.vertices.len() as f64;
        let centre: Vec<f64> = (0..3).map(|c| rest.vertices.iter().map(|v| v[c]).sum::<f64>() / n).collect();
        let mut last = 0;
        for z in [1.2, 0.9, 0.7, 0.55, 0.45, 0.38] {
            let mut p = ManoParams::zeros(HandSide::Right);
            p.trans = [-centre[0], -centre[1], z - centre[2]];
            let out = forward(&rig, &p).unwrap();
            let area = project_mask(&out, rig.faces(), &cam, g).count();
            assert!(area >= last, "area {area} at z={z} after {last}");
            last = area;
        }
        assert!(last > 1000);
    }
}
