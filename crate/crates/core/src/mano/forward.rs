use super::rig::{HandRig, NUM_ARTICULATED, NUM_INTERNAL_JOINTS, POSE_FEATURES, ROTATION_DIM};
use super::rotation::{mat_mul, mat_t_vec, mat_vec, rodrigues, rodrigues_vjp, transpose, Mat3, IDENTITY};
use super::{HandOutput, ManoParams, PARAM_DIM, POSE_DIM, SHAPE_DIM};
use crate::error::{Error, Result};

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    params: ManoParams,
    joints_rest: Vec<[f64; 3]>,
    axis_angles: Vec<[f64; 3]>,
    local: Vec<Mat3>,
    v_posed: Vec<[f64; 3]>,
    global: Vec<(Mat3, [f64; 3])>,
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn outer_acc(m: &mut Mat3, a: [f64; 3], b: [f64; 3], scale: f64) {
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += scale * a[i] * b[j];
        }
    }
}

/// `(M - I) x + c`, written so that the rest pose adds exact zeros.
fn delta(m: &Mat3, c: [f64; 3], x: [f64; 3]) -> [f64; 3] {
    let mut out = c;
    for i in 0..3 {
        for j in 0..3 {
            let e = if i == j { m[i][j] - 1.0 } else { m[i][j] };
            out[i] += e * x[j];
        }
    }
    out
}

pub fn forward(rig: &HandRig, params: &ManoParams) -> Result<HandOutput> {
    forward_with_cache(rig, params).map(|(out, _)| out)
}

pub fn forward_with_cache(rig: &HandRig, params: &ManoParams) -> Result<(HandOutput, ForwardCache)> {
    if params.side != rig.side() {
        return Err(Error::SideMismatch);
    }
    let p = rig.parts();
    let nv = rig.num_vertices();

    let mut v_shaped = p.template_vertices.clone();
    if params.beta.iter().any(|&b| b != 0.0) {
        for (v, out) in v_shaped.iter_mut().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                let dirs = &p.shape_dirs[(v * 3 + c) * SHAPE_DIM..][..SHAPE_DIM];
                *o += dirs.iter().zip(&params.beta).map(|(d, b)| d * b).sum::<f64>();
            }
        }
    }

    let mut joints_rest = vec![[0.0; 3]; NUM_INTERNAL_JOINTS];
    for (j, jr) in joints_rest.iter_mut().enumerate() {
        let row = &p.joint_regressor[j * nv..][..nv];
        for (w, v) in row.iter().zip(&v_shaped) {
            if *w != 0.0 {
                for c in 0..3 {
                    jr[c] += w * v[c];
                }
            }
        }
    }

    let mut axis_angles = vec![params.rot; NUM_INTERNAL_JOINTS];
    for (j, a) in axis_angles.iter_mut().enumerate().skip(1) {
        *a = [0.0; 3];
        for (k, &th) in params.theta.iter().enumerate() {
            let b = &p.pose_basis[k * ROTATION_DIM + (j - 1) * 3..][..3];
            for c in 0..3 {
                a[c] += th * b[c];
            }
        }
    }
    let local: Vec<Mat3> = axis_angles.iter().map(|&a| rodrigues(a)).collect();

    let mut features = [0.0; POSE_FEATURES];
    for j in 1..NUM_INTERNAL_JOINTS {
        for r in 0..3 {
            for s in 0..3 {
                features[(j - 1) * 9 + r * 3 + s] = local[j][r][s] - IDENTITY[r][s];
            }
        }
    }
    let mut v_posed = v_shaped;
    if features.iter().any(|&f| f != 0.0) {
        for (v, out) in v_posed.iter_mut().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                let dirs = &p.pose_dirs[(v * 3 + c) * POSE_FEATURES..][..POSE_FEATURES];
                *o += dirs.iter().zip(&features).map(|(d, f)| d * f).sum::<f64>();
            }
        }
    }

    let mut global = vec![(IDENTITY, [0.0; 3]); NUM_INTERNAL_JOINTS];
    for &j in rig.joint_order() {
        let r = &local[j];
        let offset = sub(joints_rest[j], mat_vec(r, joints_rest[j]));
        global[j] = match p.kinematic_parents[j] {
            None => (*r, offset),
            Some(q) => {
                let (mq, cq) = global[q];
                (mat_mul(&mq, r), add(mat_vec(&mq, offset), cq))
            }
        };
    }

    let t = params.trans;
    let vertices: Vec<[f64; 3]> = v_posed
        .iter()
        .enumerate()
        .map(|(v, &x)| {
            let weights = &p.skinning_weights[v * NUM_INTERNAL_JOINTS..][..NUM_INTERNAL_JOINTS];
            let mut out = x;
            for (j, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    let d = delta(&global[j].0, global[j].1, x);
                    for c in 0..3 {
                        out[c] += w * d[c];
                    }
                }
            }
            add(out, t)
        })
        .collect();
    let posed_joint =
        |j: usize| add(add(joints_rest[j], delta(&global[j].0, global[j].1, joints_rest[j])), t);
    let mut joints: Vec<[f64; 3]> = (1..NUM_INTERNAL_JOINTS).map(posed_joint).collect();
    joints.extend(p.fingertip_vertex_ids.iter().map(|&i| vertices[i]));
    let out = HandOutput {
        joints,
        vertices,
        wrist: posed_joint(0),
    };
    if !out.is_finite() {
        return Err(Error::NonFinite("hand forward pass produced a non-finite value".into()));
    }
    let cache = ForwardCache {
        params: *params,
        joints_rest,
        axis_angles,
        local,
        v_posed,
        global,
    };
    Ok((out, cache))
}

/// Gradient of a scalar loss with respect to the packed parameter vector
/// `[θ, β, t, R]`, given its gradients with respect to the 20 output
/// joints, the vertices and the wrist.
pub fn forward_vjp(
    rig: &HandRig,
    cache: &ForwardCache,
    grad_joints: &[[f64; 3]],
    grad_vertices: &[[f64; 3]],
    grad_wrist: [f64; 3],
) -> Result<[f64; PARAM_DIM]> {
    let p = rig.parts();
    let nv = rig.num_vertices();
    if grad_joints.len() != NUM_ARTICULATED + 5 || grad_vertices.len() != nv {
        return Err(Error::ShapeMismatch(format!(
            "gradient shapes ({}, {}) do not match ({}, {nv})",
            grad_joints.len(),
            grad_vertices.len(),
            NUM_ARTICULATED + 5
        )));
    }
    let mut gv: Vec<[f64; 3]> = grad_vertices.to_vec();
    for (k, &id) in p.fingertip_vertex_ids.iter().enumerate() {
        gv[id] = add(gv[id], grad_joints[NUM_ARTICULATED + k]);
    }
    let g_internal: Vec<[f64; 3]> = std::iter::once(grad_wrist)
        .chain(grad_joints[..NUM_ARTICULATED].iter().copied())
        .collect();

    let mut g_trans = [0.0; 3];
    for g in gv.iter().chain(&g_internal) {
        g_trans = add(g_trans, *g);
    }

    let global = &cache.global;
    let mut g_m = vec![[[0.0; 3]; 3]; NUM_INTERNAL_JOINTS];
    let mut g_c = vec![[0.0; 3]; NUM_INTERNAL_JOINTS];
    let mut g_jr = vec![[0.0; 3]; NUM_INTERNAL_JOINTS];

    for j in 0..NUM_INTERNAL_JOINTS {
        let g = g_internal[j];
        outer_acc(&mut g_m[j], g, cache.joints_rest[j], 1.0);
        g_c[j] = add(g_c[j], g);
        g_jr[j] = add(g_jr[j], mat_t_vec(&global[j].0, g));
    }

    let mut g_vp = vec![[0.0; 3]; nv];
    for v in 0..nv {
        let g = gv[v];
        let x = cache.v_posed[v];
        let weights = &p.skinning_weights[v * NUM_INTERNAL_JOINTS..][..NUM_INTERNAL_JOINTS];
        let mut out = g;
        for (j, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                outer_acc(&mut g_m[j], g, x, w);
                for c in 0..3 {
                    g_c[j][c] += w * g[c];
                }
                let mt = mat_t_vec(&global[j].0, g);
                for c in 0..3 {
                    out[c] += w * (mt[c] - g[c]);
                }
            }
        }
        g_vp[v] = out;
    }

    let mut g_local = vec![[[0.0; 3]; 3]; NUM_INTERNAL_JOINTS];
    for &j in rig.joint_order().iter().rev() {
        let r = &cache.local[j];
        let jr = cache.joints_rest[j];
        let offset = sub(jr, mat_vec(r, jr));
        let (gm, gc) = (g_m[j], g_c[j]);
        let g_offset = match p.kinematic_parents[j] {
            None => {
                for a in 0..3 {
                    for b in 0..3 {
                        g_local[j][a][b] += gm[a][b];
                    }
                }
                gc
            }
            Some(q) => {
                let mq = global[q].0;
                let rt = transpose(r);
                let from_m = mat_mul(&gm, &rt);
                let into_r = mat_mul(&transpose(&mq), &gm);
                for a in 0..3 {
                    for b in 0..3 {
                        g_m[q][a][b] += from_m[a][b];
                        g_local[j][a][b] += into_r[a][b];
                    }
                }
                outer_acc(&mut g_m[q], gc, offset, 1.0);
                g_c[q] = add(g_c[q], gc);
                mat_t_vec(&mq, gc)
            }
        };
        g_jr[j] = add(g_jr[j], sub(g_offset, mat_t_vec(r, g_offset)));
        outer_acc(&mut g_local[j], g_offset, jr, -1.0);
    }

    let mut g_features = [0.0; POSE_FEATURES];
    for v in 0..nv {
        for c in 0..3 {
            let g = g_vp[v][c];
            if g != 0.0 {
                let dirs = &p.pose_dirs[(v * 3 + c) * POSE_FEATURES..][..POSE_FEATURES];
                for (gf, d) in g_features.iter_mut().zip(dirs) {
                    *gf += g * d;
                }
            }
        }
    }
    for j in 1..NUM_INTERNAL_JOINTS {
        for r in 0..3 {
            for s in 0..3 {
                g_local[j][r][s] += g_features[(j - 1) * 9 + r * 3 + s];
            }
        }
    }

    let mut g_params = [0.0; PARAM_DIM];
    let g_rot = rodrigues_vjp(cache.axis_angles[0], &g_local[0]);
    for j in 1..NUM_INTERNAL_JOINTS {
        let ga = rodrigues_vjp(cache.axis_angles[j], &g_local[j]);
        for (k, gt) in g_params[..POSE_DIM].iter_mut().enumerate() {
            let b = &p.pose_basis[k * ROTATION_DIM + (j - 1) * 3..][..3];
            *gt += b[0] * ga[0] + b[1] * ga[1] + b[2] * ga[2];
        }
    }

    // v_shaped feeds v_posed directly and the joints through the regressor.
    let mut g_vs = g_vp;
    for (j, g) in g_jr.iter().enumerate() {
        let row = &p.joint_regressor[j * nv..][..nv];
        for (w, out) in row.iter().zip(g_vs.iter_mut()) {
            if *w != 0.0 {
                for c in 0..3 {
                    out[c] += w * g[c];
                }
            }
        }
    }
    for (v, g) in g_vs.iter().enumerate() {
        for (c, &gc) in g.iter().enumerate() {
            let dirs = &p.shape_dirs[(v * 3 + c) * SHAPE_DIM..][..SHAPE_DIM];
            for (k, d) in dirs.iter().enumerate() {
                g_params[POSE_DIM + k] += gc * d;
            }
        }
    }
    g_params[25..28].copy_from_slice(&g_trans);
    g_params[28..31].copy_from_slice(&g_rot);
    debug_assert_eq!(cache.params.to_vector().len(), PARAM_DIM);
    Ok(g_params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mano::synthetic::{mini_rig, standard_rig};
    use crate::mano::HandSide;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(seed: u64, side: HandSide, scale: f64) -> ManoParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = [0.0; PARAM_DIM];
        for x in v.iter_mut() {
            *x = rng.gen_range(-scale..scale);
        }
        ManoParams::from_vector(&v, side).unwrap()
    }

    #[test]
    fn rest_pose_is_the_template() {
        for rig in [standard_rig(HandSide::Right), mini_rig(HandSide::Left)] {
            let out = forward(&rig, &ManoParams::zeros(rig.side())).unwrap();
            assert_eq!(out.vertices, rig.parts().template_vertices);
            let nv = rig.num_vertices();
            let regress = |j: usize| {
                let mut s = [0.0; 3];
                for v in 0..nv {
                    for c in 0..3 {
                        s[c] += rig.parts().joint_regressor[j * nv + v] * rig.parts().template_vertices[v][c];
                    }
                }
                s
            };
            for j in 1..16 {
                for c in 0..3 {
                    assert!((out.joints[j - 1][c] - regress(j)[c]).abs() < 1e-15);
                }
            }
            assert_eq!(out.joints.len(), 20);
        }
    }

    #[test]
    fn root_rotation_about_z() {
        let rig = standard_rig(HandSide::Right);
        let rest = forward(&rig, &ManoParams::zeros(HandSide::Right)).unwrap();
        let mut p = ManoParams::zeros(HandSide::Right);
        p.rot = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
        let out = forward(&rig, &p).unwrap();
        let root = rest.wrist;
        // Explicit quarter turn: (x, y) -> (-y, x) about the root.
        let turn = |v: [f64; 3]| [root[0] - (v[1] - root[1]), root[1] + (v[0] - root[0]), v[2]];
        for (a, b) in out.vertices.iter().zip(&rest.vertices) {
            let e = turn(*b);
            for c in 0..3 {
                assert!((a[c] - e[c]).abs() < 1e-12);
            }
        }
        for (a, b) in out.joints.iter().zip(&rest.joints) {
            let e = turn(*b);
            for c in 0..3 {
                assert!((a[c] - e[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn side_must_match() {
        let rig = mini_rig(HandSide::Right);
        assert!(matches!(forward(&rig, &ManoParams::zeros(HandSide::Left)), Err(Error::SideMismatch)));
    }

    #[test]
    fn non_finite_params_are_reported() {
        let rig = mini_rig(HandSide::Right);
        let mut p = ManoParams::zeros(HandSide::Right);
        p.trans[1] = f64::NAN;
        assert!(matches!(forward(&rig, &p), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shape_is_linear_at_zero_pose() {
        let rig = standard_rig(HandSide::Right);
        let mut p = ManoParams::zeros(HandSide::Right);
        p.beta = [0.5, -1.0, 0.3, 0.0, 2.0, -0.7, 0.1, 0.9, -0.2, 0.4];
        let one = forward(&rig, &p).unwrap();
        for b in p.beta.iter_mut() {
            *b *= 2.0;
        }
        let two = forward(&rig, &p).unwrap();
        let sd = &rig.parts().shape_dirs;
        for v in 0..rig.num_vertices() {
            for c in 0..3 {
                let dir: f64 = (0..10).map(|k| sd[(v * 3 + c) * 10 + k] * p.beta[k] / 2.0).sum();
                assert!((two.vertices[v][c] - one.vertices[v][c] - dir).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uniform_rigid_transform_moves_every_vertex_rigidly() {
        // Equal global transforms for all joints must reduce skinning to that transform.
        let rig = standard_rig(HandSide::Right);
        let (_, mut cache) = forward_with_cache(&rig, &random_params(4, HandSide::Right, 0.4)).unwrap();
        let m = rodrigues([0.3, -0.8, 0.5]);
        let c = [0.01, -0.2, 0.05];
        cache.global = vec![(m, c); NUM_INTERNAL_JOINTS];
        let p = rig.parts();
        for (v, &x) in cache.v_posed.iter().enumerate() {
            let weights = &p.skinning_weights[v * 16..][..16];
            let mut out = x;
            for (j, &w) in weights.iter().enumerate() {
                let d = delta(&cache.global[j].0, cache.global[j].1, x);
                for k in 0..3 {
                    out[k] += w * d[k];
                }
            }
            let expect = add(mat_vec(&m, x), c);
            for k in 0..3 {
                assert!((out[k] - expect[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mirrored_rig_matches_reflected_output() {
        let right = standard_rig(HandSide::Right);
        let left = right.mirrored();
        for seed in 0..4 {
            let p = random_params(seed, HandSide::Right, 0.6);
            let r = forward(&right, &p).unwrap();
            let l = forward(&left, &p.mirrored()).unwrap();
            for (a, b) in l.vertices.iter().chain(&l.joints).zip(r.vertices.iter().chain(&r.joints)) {
                assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12 && (a[2] - b[2]).abs() < 1e-12);
            }
        }
    }

    fn scalar_loss(out: &HandOutput, gj: &[[f64; 3]], gv: &[[f64; 3]], gw: [f64; 3]) -> f64 {
        let dot = |a: &[[f64; 3]], b: &[[f64; 3]]| -> f64 {
            a.iter().zip(b).map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).sum()
        };
        dot(&out.joints, gj) + dot(&out.vertices, gv) + dot(&[out.wrist], &[gw])
    }

    #[test]
    fn vjp_matches_central_differences() {
        for (rig, seed) in [(standard_rig(HandSide::Right), 1u64), (standard_rig(HandSide::Left), 2), (mini_rig(HandSide::Right), 3)] {
            let side = rig.side();
            let params = random_params(seed, side, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut rand3 = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let gj: Vec<[f64; 3]> = (0..20).map(|_| rand3()).collect();
            let gv: Vec<[f64; 3]> = (0..rig.num_vertices()).map(|_| rand3()).collect();
            let gw = rand3();
            let (_, cache) = forward_with_cache(&rig, &params).unwrap();
            let an = forward_vjp(&rig, &cache, &gj, &gv, gw).unwrap();
            let base = params.to_vector();
            let h = 1e-6;
            for i in 0..PARAM_DIM {
                let eval = |d: f64| {
                    let mut v = base;
                    v[i] += d;
                    let out = forward(&rig, &ManoParams::from_vector(&v, side).unwrap()).unwrap();
                    scalar_loss(&out, &gj, &gv, gw)
                };
                let num = (eval(h) - eval(-h)) / (2.0 * h);
                let tol = 1e-6 * (1.0 + num.abs());
                assert!((an[i] - num).abs() < tol, "param {i}: analytic {} vs numeric {num}", an[i]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn translation_commutes(seed in any::<u64>(), dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0) {
            let rig = standard_rig(HandSide::Right);
            let p = random_params(seed, HandSide::Right, 0.8);
            let mut q = p;
            q.trans = [p.trans[0] + dx, p.trans[1] + dy, p.trans[2] + dz];
            let a = forward(&rig, &p).unwrap();
            let b = forward(&rig, &q).unwrap();
            let d = [dx, dy, dz];
            for (u, v) in a.vertices.iter().chain(&a.joints).zip(b.vertices.iter().chain(&b.joints)) {
                for c in 0..3 {
                    prop_assert!((v[c] - u[c] - d[c]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn output_shapes_and_finiteness(seed in any::<u64>()) {
            let rig = standard_rig(HandSide::Left);
            let out = forward(&rig, &random_params(seed, HandSide::Left, 2.0)).unwrap();
            prop_assert_eq!(out.joints.len(), 20);
            prop_assert_eq!(out.vertices.len(), 778);
            prop_assert!(out.is_finite());
        }
    }
}
