//! Checked-in rig fixtures. Set `EVEGO_UPDATE_FIXTURES=1` to rewrite them.

use std::path::PathBuf;

use evego::mano::{forward, load_rig, save_rig, synthetic, HandSide, ManoParams};

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn mini_rig_fixtures_match_the_generator() {
    for (side, name) in [(HandSide::Right, "mini_rig_right.hrig"), (HandSide::Left, "mini_rig_left.hrig")] {
        let rig = synthetic::mini_rig(side);
        if std::env::var_os("EVEGO_UPDATE_FIXTURES").is_some_and(|v| !v.is_empty()) {
            save_rig(&rig, path(name)).unwrap();
        }
        let loaded = load_rig(path(name)).unwrap();
        assert_eq!(loaded.parts(), rig.parts(), "{name}");
    }
}

#[test]
fn left_fixture_mirrors_right_fixture() {
    let right = load_rig(path("mini_rig_right.hrig")).unwrap();
    let left = load_rig(path("mini_rig_left.hrig")).unwrap();
    let mut p = ManoParams::zeros(HandSide::Right);
    p.theta.iter_mut().enumerate().for_each(|(i, t)| *t = 0.05 * i as f64 - 0.2);
    p.beta[0] = 0.4;
    p.trans = [0.03, -0.02, 0.5];
    p.rot = [0.2, -0.4, 0.1];
    let r = forward(&right, &p).unwrap();
    let l = forward(&left, &p.mirrored()).unwrap();
    let flip = |v: &[f64; 3]| [-v[0], v[1], v[2]];
    for (a, b) in r.joints.iter().chain(&r.vertices).zip(l.joints.iter().chain(&l.vertices)) {
        let m = flip(a);
        for c in 0..3 {
            assert!((m[c] - b[c]).abs() <= 1e-9);
        }
    }
}
