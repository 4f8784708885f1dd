//! PCK / AUC, MPJPE, MPVPE and dataset-level reports. Positions are
//! meters on input; errors and thresholds are millimeters.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mano::{HandOutput, HandPair};
use crate::par;
use crate::segmask::{iou, HandMask};

const MM_PER_M: f64 = 1000.0;

/// Joints of one hand, with the wrist used for root-relative evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct HandJoints {
    pub joints: Vec<[f64; 3]>,
    pub wrist: Option<[f64; 3]>,
}

impl From<&HandOutput> for HandJoints {
    fn from(o: &HandOutput) -> Self {
        Self {
            joints: o.joints.clone(),
            wrist: Some(o.wrist),
        }
    }
}

fn dist_mm(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() * MM_PER_M
}

fn point_errors(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted vs {} ground-truth points",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred.iter().zip(gt).map(|(&p, &g)| dist_mm(p, g)).collect())
}

fn mean_error(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::SampleCountMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        let e = point_errors(p, g)?;
        sum += e.iter().sum::<f64>();
        n += e.len();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean Euclidean joint error over all joints of all hands, in mm.
pub fn mpjpe(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>]) -> Result<f64> {
    mean_error(pred, gt)
}

/// Mean Euclidean vertex error over all vertices of all hands, in mm.
pub fn mpvpe(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>]) -> Result<f64> {
    mean_error(pred, gt)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PckCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Thresholds `0, step, 2*step, ..., max` in mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PckGrid {
    pub max_mm: f64,
    pub step_mm: f64,
}

impl Default for PckGrid {
    fn default() -> Self {
        Self {
            max_mm: 100.0,
            step_mm: 1.0,
        }
    }
}

impl PckGrid {
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        if !(self.step_mm > 0.0 && self.max_mm > 0.0 && self.max_mm.is_finite()) {
            return Err(Error::config(format!("invalid PCK grid {self:?}")));
        }
        let n = (self.max_mm / self.step_mm).round() as usize;
        Ok((0..=n).map(|i| i as f64 * self.step_mm).collect())
    }
}

fn hand_errors(pred: &HandJoints, gt: &HandJoints, root_relative: bool, index: usize) -> Result<Vec<f64>> {
    if !root_relative {
        return point_errors(&pred.joints, &gt.joints);
    }
    let (Some(pw), Some(gw)) = (pred.wrist, gt.wrist) else {
        return Err(Error::MissingWrist(index));
    };
    let rel = |v: &[[f64; 3]], w: [f64; 3]| -> Vec<[f64; 3]> {
        v.iter().map(|p| [p[0] - w[0], p[1] - w[1], p[2] - w[2]]).collect()
    };
    point_errors(&rel(&pred.joints, pw), &rel(&gt.joints, gw))
}

fn curve_from_errors(errors: &[f64], grid: &PckGrid) -> Result<PckCurve> {
    let thresholds = grid.thresholds()?;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    let fractions = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / n)
        .collect();
    Ok(PckCurve { thresholds, fractions })
}

/// Share of joints within each threshold. In root-relative mode each
/// hand's wrist is subtracted from its joints in both prediction and
/// ground truth first.
pub fn pck_curve(pred: &[HandJoints], gt: &[HandJoints], root_relative: bool, grid: &PckGrid) -> Result<PckCurve> {
    if pred.len() != gt.len() {
        return Err(Error::SampleCountMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let mut errors = Vec::new();
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        errors.extend(hand_errors(p, g, root_relative, i)?);
    }
    curve_from_errors(&errors, grid)
}

/// Trapezoidal area under the curve divided by the threshold range.
pub fn auc(curve: &PckCurve) -> f64 {
    let t = &curve.thresholds;
    let f = &curve.fractions;
    if t.len() < 2 {
        return f.first().copied().unwrap_or(0.0);
    }
    let mut area = 0.0;
    for i in 1..t.len() {
        area += 0.5 * (f[i] + f[i - 1]) * (t[i] - t[i - 1]);
    }
    area / (t[t.len() - 1] - t[0])
}

pub fn write_pck_csv<W: Write>(mut out: W, curve: &PckCurve) -> Result<()> {
    writeln!(out, "threshold_mm,fraction")?;
    for (t, f) in curve.thresholds.iter().zip(&curve.fractions) {
        writeln!(out, "{t},{f}")?;
    }
    Ok(())
}

/// Hands and optional mask of one sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalSample {
    pub hands: HandPair<HandOutput>,
    pub mask: Option<HandMask>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub grid: PckGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Area under the wrist-relative PCK curve.
    pub r_auc: f64,
    pub mpjpe_mm: f64,
    pub mpvpe_mm: f64,
    /// Mean mask IoU over samples with both masks.
    pub iou: Option<f64>,
    pub sample_count: usize,
    #[serde(skip)]
    pub evaluated_hands: usize,
    /// Hands absent from the ground truth.
    #[serde(skip)]
    pub skipped_hands: usize,
    #[serde(skip)]
    pub curve: PckCurve,
}

#[derive(Default)]
struct SampleStats {
    rel_errors: Vec<f64>,
    joint_sum: f64,
    joints: usize,
    vertex_sum: f64,
    vertices: usize,
    hands: usize,
    skipped: usize,
    iou: Option<f64>,
}

fn sample_stats(pred: &EvalSample, gt: &EvalSample, index: usize) -> Result<SampleStats> {
    let mut s = SampleStats::default();
    for side in [crate::mano::HandSide::Left, crate::mano::HandSide::Right] {
        let Some(g) = gt.hands.get(side) else {
            s.skipped += 1;
            continue;
        };
        let p = pred
            .hands
            .get(side)
            .ok_or_else(|| Error::ShapeMismatch(format!("sample {index}: no {side:?} prediction")))?;
        let je = point_errors(&p.joints, &g.joints)?;
        s.joint_sum += je.iter().sum::<f64>();
        s.joints += je.len();
        let ve = point_errors(&p.vertices, &g.vertices)?;
        s.vertex_sum += ve.iter().sum::<f64>();
        s.vertices += ve.len();
        s.rel_errors
            .extend(hand_errors(&HandJoints::from(p), &HandJoints::from(g), true, index)?);
        s.hands += 1;
    }
    if let (Some(p), Some(g)) = (&pred.mask, &gt.mask) {
        s.iou = Some(iou(p, g)?);
    }
    Ok(s)
}

/// Aggregates all metrics over aligned prediction and ground-truth
/// samples. Per-sample work runs in parallel; the reduction runs in sample
/// order, so the report does not depend on the thread count.
pub fn evaluate_dataset(pred: &[EvalSample], gt: &[EvalSample], config: &EvalConfig) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::SampleCountMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let stats = par::map_indexed(pred.len(), |i| sample_stats(&pred[i], &gt[i], i));
    let mut all = SampleStats::default();
    let (mut iou_sum, mut iou_n) = (0.0, 0usize);
    for s in stats {
        let s = s?;
        all.rel_errors.extend(s.rel_errors);
        all.joint_sum += s.joint_sum;
        all.joints += s.joints;
        all.vertex_sum += s.vertex_sum;
        all.vertices += s.vertices;
        all.hands += s.hands;
        all.skipped += s.skipped;
        if let Some(v) = s.iou {
            iou_sum += v;
            iou_n += 1;
        }
    }
    let curve = curve_from_errors(&all.rel_errors, &config.grid)?;
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(MetricReport {
        r_auc: if all.joints == 0 { 0.0 } else { auc(&curve) },
        mpjpe_mm: mean(all.joint_sum, all.joints),
        mpvpe_mm: mean(all.vertex_sum, all.vertices),
        iou: (iou_n > 0).then(|| iou_sum / iou_n as f64),
        sample_count: pred.len(),
        evaluated_hands: all.hands,
        skipped_hands: all.skipped,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::SensorGeometry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
        (0..n).map(|_| [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(0.3..0.6)]).collect()
    }

    fn offset(v: &[[f64; 3]], d: [f64; 3]) -> Vec<[f64; 3]> {
        v.iter().map(|p| [p[0] + d[0], p[1] + d[1], p[2] + d[2]]).collect()
    }

    #[test]
    fn mpjpe_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = vec![pts(&mut rng, 20), pts(&mut rng, 20)];
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<_> = gt.iter().map(|h| offset(h, [0.003, 0.004, 0.0])).collect();
        assert!((mpjpe(&shifted, &gt).unwrap() - 5.0).abs() < 1e-9);
        // Mixed offsets against a brute-force mean.
        let pred: Vec<_> = gt.iter().map(|h| pts(&mut rng, h.len())).collect();
        let mut sum = 0.0;
        let mut n = 0.0;
        for (p, g) in pred.iter().zip(&gt) {
            for (a, b) in p.iter().zip(g) {
                sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt() * 1000.0;
                n += 1.0;
            }
        }
        assert!((mpjpe(&pred, &gt).unwrap() - sum / n).abs() < 1e-9);
        assert!((mpvpe(&pred, &gt).unwrap() - sum / n).abs() < 1e-9);
        assert!(matches!(mpjpe(&pred[..1], &gt), Err(Error::SampleCountMismatch { .. })));
        assert!(matches!(mpjpe(&[gt[0][..3].to_vec()], &gt[..1]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mpvpe_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = vec![pts(&mut rng, 778)];
        assert_eq!(mpvpe(&gt, &gt).unwrap(), 0.0);
        let shifted = vec![offset(&gt[0], [0.0, -0.003, 0.004])];
        assert!((mpvpe(&shifted, &gt).unwrap() - 5.0).abs() < 1e-9);
    }

    fn hands(v: &[Vec<[f64; 3]>], wrists: &[[f64; 3]]) -> Vec<HandJoints> {
        v.iter()
            .zip(wrists)
            .map(|(j, &w)| HandJoints {
                joints: j.clone(),
                wrist: Some(w),
            })
            .collect()
    }

    #[test]
    fn pck_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt_j = vec![pts(&mut rng, 20), pts(&mut rng, 20)];
        let w = [[0.0, 0.0, 0.4], [0.1, 0.0, 0.4]];
        let gt = hands(&gt_j, &w);
        let grid = PckGrid::default();
        let perfect = pck_curve(&gt, &gt, false, &grid).unwrap();
        assert_eq!(perfect.thresholds.len(), 101);
        assert!(perfect.fractions.iter().all(|&f| f == 1.0));
        assert_eq!(auc(&perfect), 1.0);

        // Ground truth on the z = 0 plane so every error is exactly 50 mm.
        let flat: Vec<Vec<[f64; 3]>> = gt_j.iter().map(|h| h.iter().map(|p| [p[0], p[1], 0.0]).collect()).collect();
        let lifted: Vec<Vec<[f64; 3]>> = flat.iter().map(|h| h.iter().map(|p| [p[0], p[1], 0.05]).collect()).collect();
        let step = pck_curve(&hands(&lifted, &w), &hands(&flat, &w), false, &grid).unwrap();
        let pred = hands(&gt_j.iter().map(|h| offset(h, [0.0, 0.0, 0.05])).collect::<Vec<_>>(), &w);
        for (t, f) in step.thresholds.iter().zip(&step.fractions) {
            assert_eq!(*f, if *t >= 50.0 { 1.0 } else { 0.0 }, "at {t}");
        }

        // Rigid translation of each predicted hand together with its wrist.
        let d = [[0.02, -0.01, 0.03], [-0.04, 0.0, 0.01]];
        let moved: Vec<HandJoints> = pred
            .iter()
            .zip(d)
            .map(|(h, d)| HandJoints {
                joints: offset(&h.joints, d),
                wrist: Some(offset(&[h.wrist.unwrap()], d)[0]),
            })
            .collect();
        let a = pck_curve(&pred, &gt, true, &grid).unwrap();
        let b = pck_curve(&moved, &gt, true, &grid).unwrap();
        assert_eq!(a, b);

        let no_wrist = vec![HandJoints { joints: gt_j[0].clone(), wrist: None }];
        assert!(matches!(pck_curve(&no_wrist, &gt[..1], true, &grid), Err(Error::MissingWrist(0))));
    }

    #[test]
    fn auc_examples() {
        let grid = PckGrid::default();
        let t = grid.thresholds().unwrap();
        let ones = PckCurve { thresholds: t.clone(), fractions: vec![1.0; 101] };
        let zeros = PckCurve { thresholds: t.clone(), fractions: vec![0.0; 101] };
        assert_eq!(auc(&ones), 1.0);
        assert_eq!(auc(&zeros), 0.0);
        let step = PckCurve {
            thresholds: t.clone(),
            fractions: t.iter().map(|&x| if x >= 50.0 { 1.0 } else { 0.0 }).collect(),
        };
        // Independent trapezoid sum: 50 full intervals plus one half interval.
        let oracle: f64 = (0..100)
            .map(|i| (step.fractions[i] + step.fractions[i + 1]) / 2.0)
            .sum::<f64>()
            / 100.0;
        assert_eq!(auc(&step), oracle);
        assert!((auc(&step) - 0.505).abs() < 1e-12);
    }

    fn output(j: Vec<[f64; 3]>, v: Vec<[f64; 3]>, w: [f64; 3]) -> HandOutput {
        HandOutput { joints: j, vertices: v, wrist: w }
    }

    #[test]
    fn evaluate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hand = output(pts(&mut rng, 20), pts(&mut rng, 50), [0.0, 0.0, 0.4]);
        let s = EvalSample { hands: HandPair::new(None, Some(hand.clone())), mask: None };
        let r = evaluate_dataset(&[s.clone()], &[s.clone()], &EvalConfig::default()).unwrap();
        assert_eq!((r.r_auc, r.mpjpe_mm, r.mpvpe_mm, r.sample_count), (1.0, 0.0, 0.0, 1));
        assert_eq!((r.evaluated_hands, r.skipped_hands), (1, 1));

        let shift = |d: f64| EvalSample {
            hands: HandPair::new(None, Some(output(offset(&hand.joints, [d, 0.0, 0.0]), hand.vertices.clone(), hand.wrist))),
            mask: None,
        };
        let r = evaluate_dataset(&[shift(0.002), shift(0.004)], &[s.clone(), s.clone()], &EvalConfig::default()).unwrap();
        assert!((r.mpjpe_mm - 3.0).abs() < 1e-9);
        assert!(matches!(
            evaluate_dataset(&[s.clone()], &[], &EvalConfig::default()),
            Err(Error::SampleCountMismatch { pred: 1, gt: 0 })
        ));
        let json = serde_json::to_value(&r).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["iou", "mpjpe_mm", "mpvpe_mm", "r_auc", "sample_count"]);
    }

    fn random_sample(rng: &mut ChaCha8Rng) -> (EvalSample, EvalSample) {
        let g = SensorGeometry { width: 12, height: 8 };
        let mk = |rng: &mut ChaCha8Rng| output(pts(rng, 20), pts(rng, 40), [rng.gen_range(-0.1..0.1), 0.0, 0.4]);
        let gl = rng.gen_bool(0.7).then(|| mk(rng));
        let gr = mk(rng);
        let pl = mk(rng);
        let pr = mk(rng);
        let mask = |rng: &mut ChaCha8Rng| HandMask::from_data(g, 0, (0..96).map(|_| rng.gen_bool(0.3)).collect()).unwrap();
        let gm = mask(rng);
        let pm = mask(rng);
        (
            EvalSample { hands: HandPair::new(Some(pl), Some(pr)), mask: Some(pm) },
            EvalSample { hands: HandPair::new(gl, Some(gr)), mask: Some(gm) },
        )
    }

    #[test]
    fn ten_samples_match_per_sample_recombination() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (pred, gt): (Vec<_>, Vec<_>) = (0..10).map(|_| random_sample(&mut rng)).unzip();
        let r = evaluate_dataset(&pred, &gt, &EvalConfig::default()).unwrap();

        let (mut js, mut jn, mut vs, mut vn, mut is) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut pj, mut gj) = (Vec::new(), Vec::new());
        for (p, g) in pred.iter().zip(&gt) {
            for (ph, gh) in [(&p.hands.left, &g.hands.left), (&p.hands.right, &g.hands.right)] {
                let (Some(ph), Some(gh)) = (ph, gh) else { continue };
                let m = mpjpe(&[ph.joints.clone()], &[gh.joints.clone()]).unwrap();
                js += m * 20.0;
                jn += 20.0;
                let v = mpvpe(&[ph.vertices.clone()], &[gh.vertices.clone()]).unwrap();
                vs += v * 40.0;
                vn += 40.0;
                pj.push(HandJoints::from(ph));
                gj.push(HandJoints::from(gh));
            }
            is += iou(p.mask.as_ref().unwrap(), g.mask.as_ref().unwrap()).unwrap();
        }
        assert!((r.mpjpe_mm - js / jn).abs() < 1e-9);
        assert!((r.mpvpe_mm - vs / vn).abs() < 1e-9);
        assert!((r.iou.unwrap() - is / 10.0).abs() < 1e-9);
        let curve = pck_curve(&pj, &gj, true, &PckGrid::default()).unwrap();
        assert!((r.r_auc - auc(&curve)).abs() < 1e-9);

        // Reversed sample order gives the same report.
        let rp: Vec<_> = pred.iter().rev().cloned().collect();
        let rg: Vec<_> = gt.iter().rev().cloned().collect();
        let rev = evaluate_dataset(&rp, &rg, &EvalConfig::default()).unwrap();
        assert!((rev.mpjpe_mm - r.mpjpe_mm).abs() < 1e-9 && rev.r_auc == r.r_auc);
    }

    #[test]
    fn pck_csv_format() {
        let c = PckCurve { thresholds: vec![0.0, 1.0], fractions: vec![0.25, 1.0] };
        let mut buf = Vec::new();
        write_pck_csv(&mut buf, &c).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "threshold_mm,fraction\n0,0.25\n1,1\n");
    }

    proptest! {
        #[test]
        fn curve_invariants(seed in any::<u64>(), dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt = hands(&[pts(&mut rng, 20)], &[[0.0, 0.0, 0.4]]);
            let pred = hands(&[pts(&mut rng, 20)], &[[0.01, 0.0, 0.41]]);
            let grid = PckGrid::default();
            let c = pck_curve(&pred, &gt, true, &grid).unwrap();
            prop_assert!(c.fractions.windows(2).all(|w| w[0] <= w[1]));
            let a = auc(&c);
            prop_assert!((0.0..=1.0).contains(&a));
            let moved = vec![HandJoints {
                joints: offset(&pred[0].joints, [dx, dy, dz]),
                wrist: Some(offset(&[pred[0].wrist.unwrap()], [dx, dy, dz])[0]),
            }];
            let m = pck_curve(&moved, &gt, true, &grid).unwrap();
            prop_assert!((auc(&m) - a).abs() <= 1e-12);
            // A pointwise-dominating curve has at least the same area.
            let mut up = c.clone();
            for (i, f) in up.fractions.iter_mut().enumerate() {
                *f = (*f + if (i as u64 ^ seed) % 3 == 0 { 0.1 } else { 0.0 }).min(1.0);
            }
            prop_assert!(auc(&up) >= a);
            // Scale consistency.
            let meters: f64 = pred[0].joints.iter().zip(&gt[0].joints)
                .map(|(p, g)| ((p[0]-g[0]).powi(2) + (p[1]-g[1]).powi(2) + (p[2]-g[2]).powi(2)).sqrt()).sum::<f64>() / 20.0;
            let mm = mpjpe(&[pred[0].joints.clone()], &[gt[0].joints.clone()]).unwrap();
            prop_assert!((mm - 1000.0 * meters).abs() < 1e-9);
        }
    }
}
