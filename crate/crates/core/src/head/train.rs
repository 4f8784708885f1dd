use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::HeadModel;
use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{HandEstimate, HandLossBreakdown, HandLossWeights};
use crate::mano::{HandPair, HandRig, HandSide, NUM_OUTPUT_JOINTS, POSE_DIM, SHAPE_DIM};
use crate::par;
use crate::repr::EventCloud;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction, one moment pair per parameter entry.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, model: &HeadModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.parameters().iter().map(|p| vec![0.0; p.tensor.data.len()]).collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&mut self, model: &mut HeadModel, grads: &[Vec<f64>]) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (k, p) in model.parameters_mut().iter_mut().enumerate() {
            for (i, w) in p.tensor.data.iter_mut().enumerate() {
                let g = grads[k][i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *w -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            }
        }
    }
}

/// One training example: an input cloud and the hands present in it.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySample {
    pub cloud: EventCloud,
    pub gt: HandPair<HandEstimate>,
}

struct LossVars {
    total: Var,
    parts: [Option<Var>; 4],
}

fn flat(points: &[[f64; 3]]) -> Vec<f64> {
    points.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Records the combined hand loss on the tape. Mirrors `total_hand_loss`.
fn record_loss<'a>(
    tape: &mut Tape<'a>,
    outputs: [Var; 2],
    rigs: &'a HandPair<HandRig>,
    gt: &HandPair<HandEstimate>,
    w: &HandLossWeights,
) -> Result<LossVars> {
    let mut joints = Vec::new();
    let mut verts = Vec::new();
    let mut mano = Vec::new();
    let mut posed = [None, None];
    for (side, g) in gt.iter() {
        let idx = (side == HandSide::Right) as usize;
        let rig = rigs
            .get(side)
            .ok_or_else(|| Error::Config(format!("no {side:?} rig for a ground-truth hand")))?;
        let stacked = tape.mano(outputs[idx], rig)?;
        let j = tape.slice_rows(stacked, 0, NUM_OUTPUT_JOINTS)?;
        let v = tape.slice_rows(stacked, NUM_OUTPUT_JOINTS, rig.num_vertices())?;
        joints.push(tape.l1_point_mean(j, flat(&g.output.joints))?);
        verts.push(tape.l1_point_mean(v, flat(&g.output.vertices))?);
        let theta = tape.slice_cols(outputs[idx], 0, POSE_DIM)?;
        let beta = tape.slice_cols(outputs[idx], POSE_DIM, SHAPE_DIM)?;
        let lt = tape.l2_dist(theta, g.params.theta.to_vec())?;
        let lb = tape.l2_dist(beta, g.params.beta.to_vec())?;
        mano.push(tape.add(lt, lb)?);
        posed[idx] = Some(j);
    }
    if joints.is_empty() {
        let zero = tape.leaf(Tensor::scalar(0.0));
        return Ok(LossVars {
            total: zero,
            parts: [None; 4],
        });
    }
    let n = joints.len() as f64;
    let sum = |tape: &mut Tape<'a>, xs: &[Var]| -> Result<Var> {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = tape.add(acc, x)?;
        }
        Ok(acc)
    };
    let js = sum(tape, &joints)?;
    let vs = sum(tape, &verts)?;
    let ms = sum(tape, &mano)?;
    let jm = tape.scale(js, 1.0 / n);
    let vm = tape.scale(vs, 1.0 / n);
    let inter = match (posed, &gt.left, &gt.right) {
        ([Some(jl), Some(jr)], Some(gl), Some(gr)) => {
            let d = tape.sub(jl, jr)?;
            let target: Vec<f64> = flat(&gl.output.joints)
                .iter()
                .zip(flat(&gr.output.joints))
                .map(|(a, b)| a - b)
                .collect();
            Some(tape.l2_point_mean(d, target)?)
        }
        _ => None,
    };
    let mut total = tape.scale(jm, w.lambda_gamma);
    if let Some(i) = inter {
        let t = tape.scale(i, w.lambda_delta);
        total = tape.add(total, t)?;
    }
    let t = tape.scale(vm, w.lambda_epsilon);
    total = tape.add(total, t)?;
    let t = tape.scale(ms, w.lambda_zeta);
    total = tape.add(total, t)?;
    Ok(LossVars {
        total,
        parts: [Some(jm), inter, Some(vm), Some(ms)],
    })
}

fn breakdown(tape: &Tape<'_>, vars: &LossVars) -> HandLossBreakdown {
    let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
    HandLossBreakdown {
        joints: get(vars.parts[0]),
        interhand: get(vars.parts[1]),
        vertices: get(vars.parts[2]),
        mano: get(vars.parts[3]),
        total: tape.value(vars.total).item(),
    }
}

/// Loss of one sample without gradients.
pub fn sample_loss(
    model: &HeadModel,
    sample: &ToySample,
    rigs: &HandPair<HandRig>,
    w: &HandLossWeights,
) -> Result<HandLossBreakdown> {
    let mut tape = Tape::new();
    let out = model.build(&mut tape, &sample.cloud)?;
    let vars = record_loss(&mut tape, out, rigs, &sample.gt, w)?;
    Ok(breakdown(&tape, &vars))
}

/// Loss and per-parameter gradients of one sample.
pub fn sample_gradients(
    model: &HeadModel,
    sample: &ToySample,
    rigs: &HandPair<HandRig>,
    w: &HandLossWeights,
) -> Result<(HandLossBreakdown, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let out = model.build(&mut tape, &sample.cloud)?;
    let vars = record_loss(&mut tape, out, rigs, &sample.gt, w)?;
    let b = breakdown(&tape, &vars);
    let g = tape.backward(vars.total)?;
    let mut grads: Vec<Vec<f64>> = model.parameters().iter().map(|p| vec![0.0; p.tensor.data.len()]).collect();
    for (id, v) in g.by_param {
        grads[id] = v;
    }
    Ok((b, grads))
}

fn mean_breakdown(items: &[HandLossBreakdown]) -> HandLossBreakdown {
    let n = items.len() as f64;
    let mut m = HandLossBreakdown::default();
    for b in items {
        m.joints += b.joints;
        m.interhand += b.interhand;
        m.vertices += b.vertices;
        m.mano += b.mano;
        m.total += b.total;
    }
    HandLossBreakdown {
        joints: m.joints / n,
        interhand: m.interhand / n,
        vertices: m.vertices / n,
        mano: m.mano / n,
        total: m.total / n,
    }
}

/// Mean loss over a dataset, evaluated in parallel and reduced in order.
pub fn evaluate_loss(
    model: &HeadModel,
    data: &[ToySample],
    rigs: &HandPair<HandRig>,
    w: &HandLossWeights,
) -> Result<HandLossBreakdown> {
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let parts = par::map_indexed(data.len(), |i| sample_loss(model, &data[i], rigs, w));
    Ok(mean_breakdown(&parts.into_iter().collect::<Result<Vec<_>>>()?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: HandLossBreakdown,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,L_joints,L_interhand,L_vertices,L_MANO,L_total")?;
        for r in &self.epochs {
            let l = r.loss;
            writeln!(out, "{},{},{},{},{},{}", r.epoch, l.joints, l.interhand, l.vertices, l.mano, l.total)?;
        }
        Ok(())
    }
}

/// Full-batch training, one Adam step per epoch. Each record holds the
/// mean loss at the parameters before that epoch's step. Per-sample
/// gradients are computed in parallel and summed in sample order, so the
/// result does not depend on the thread count.
pub fn train_toy(
    model: &mut HeadModel,
    data: &[ToySample],
    rigs: &HandPair<HandRig>,
    w: &HandLossWeights,
    adam: AdamConfig,
    epochs: usize,
) -> Result<TrainingLog> {
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    w.validate()?;
    let mut opt = Adam::new(adam, model);
    let mut log = TrainingLog::default();
    let n = data.len() as f64;
    for epoch in 1..=epochs {
        let parts = par::map_indexed(data.len(), |i| sample_gradients(model, &data[i], rigs, w));
        let mut losses = Vec::with_capacity(parts.len());
        let mut total: Option<Vec<Vec<f64>>> = None;
        for part in parts {
            let (b, g) = part.map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("step {epoch}: {m}")),
                other => other,
            })?;
            losses.push(b);
            match &mut total {
                None => total = Some(g),
                Some(t) => {
                    for (a, b) in t.iter_mut().zip(&g) {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    }
                }
            }
        }
        let mut grads = total.unwrap_or_default();
        grads.iter_mut().flatten().for_each(|g| *g /= n);
        let loss = mean_breakdown(&losses);
        if !loss.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("step {epoch}")));
        }
        log.epochs.push(EpochRecord { epoch, loss });
        opt.step(model, &grads);
    }
    Ok(log)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Denominator floor for the relative error, so that gradients at the
/// level of rounding noise compare on an absolute scale instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares backprop against central differences on `count` parameter
/// entries drawn with `seed`. Relative error is
/// `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn gradient_check(
    model: &HeadModel,
    sample: &ToySample,
    rigs: &HandPair<HandRig>,
    w: &HandLossWeights,
    count: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = sample_gradients(model, sample, rigs, w)?;
    let total = model.parameter_count();
    let mut picks = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), total, count.min(total)).into_vec();
    picks.sort_unstable();
    let locate = |mut i: usize| {
        for (k, p) in model.parameters().iter().enumerate() {
            let len = p.tensor.data.len();
            if i < len {
                return (k, i);
            }
            i -= len;
        }
        unreachable!("index within parameter count")
    };
    let errors = par::map_indexed(picks.len(), |j| -> Result<f64> {
        let (k, i) = locate(picks[j]);
        let eval = |delta: f64| -> Result<f64> {
            let mut m = model.clone();
            m.parameters_mut()[k].tensor.data[i] += delta;
            Ok(sample_loss(&m, sample, rigs, w)?.total)
        };
        let num = (eval(h)? - eval(-h)?) / (2.0 * h);
        let ana = grads[k][i];
        Ok((ana - num).abs() / ana.abs().max(num.abs()).max(GRAD_CHECK_FLOOR))
    });
    let mut max_rel_error: f64 = 0.0;
    for e in errors {
        max_rel_error = max_rel_error.max(e?);
    }
    Ok(GradCheckReport {
        checked: picks.len(),
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::model::HeadConfig;
    use crate::losses::total_hand_loss;
    use crate::mano::{forward, synthetic, ManoParams, PARAM_DIM};
    use crate::repr::CloudPoint;
    use rand::Rng;

    fn rigs() -> HandPair<HandRig> {
        HandPair::both(synthetic::mini_rig(HandSide::Left), synthetic::mini_rig(HandSide::Right))
    }

    fn small() -> HeadConfig {
        HeadConfig {
            point_feature_dims: vec![5, 16, 24],
            global_dim: 24,
            attn_dim: 8,
            heads: 2,
            tokens: 4,
            decoder_dims: vec![16, PARAM_DIM],
            seed: 11,
            ..HeadConfig::default()
        }
    }

    fn sample(rigs: &HandPair<HandRig>, seed: u64, both: bool) -> ToySample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..24)
            .map(|_| CloudPoint {
                x: rng.gen_range(0.0..1.0),
                y: rng.gen_range(0.0..1.0),
                t: rng.gen_range(0.0..1.0),
                p: 1.0,
                n: 1.0,
            })
            .collect();
        let cloud = EventCloud::from_real_points(pts, 32).unwrap();
        let mut est = |side| {
            let mut p = ManoParams::zeros(side);
            p.theta.iter_mut().for_each(|t| *t = rng.gen_range(0.0..0.6));
            p.beta.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            p.trans = [if side == HandSide::Left { -0.1 } else { 0.1 }, 0.0, 0.4];
            let output = forward(rigs.get(side).unwrap(), &p).unwrap();
            HandEstimate { params: p, output }
        };
        let left = est(HandSide::Left);
        let right = est(HandSide::Right);
        ToySample {
            cloud,
            gt: if both { HandPair::both(left, right) } else { HandPair::new(None, Some(right)) },
        }
    }

    #[test]
    fn tape_loss_matches_reference() {
        let rigs = rigs();
        let model = HeadModel::new(small()).unwrap();
        let w = HandLossWeights::default();
        for both in [true, false] {
            let s = sample(&rigs, 5, both);
            let got = sample_loss(&model, &s, &rigs, &w).unwrap();
            let (l, r) = super::super::forward_head(&model, &s.cloud).unwrap();
            let pred = HandPair::both(
                HandEstimate {
                    output: forward(rigs.left.as_ref().unwrap(), &l).unwrap(),
                    params: l,
                },
                HandEstimate {
                    output: forward(rigs.right.as_ref().unwrap(), &r).unwrap(),
                    params: r,
                },
            );
            let want = total_hand_loss(&pred, &s.gt, &w).unwrap();
            for (a, b) in [
                (got.joints, want.joints),
                (got.interhand, want.interhand),
                (got.vertices, want.vertices),
                (got.mano, want.mano),
                (got.total, want.total),
            ] {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let rigs = rigs();
        let model = HeadModel::new(small()).unwrap();
        let s = sample(&rigs, 8, true);
        let r = gradient_check(&model, &s, &rigs, &HandLossWeights::default(), 60, 1e-5, 2).unwrap();
        assert_eq!(r.checked, 60);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_epochs_and_zero_lr() {
        let rigs = rigs();
        let data: Vec<_> = (0..3).map(|i| sample(&rigs, i, i != 1)).collect();
        let w = HandLossWeights::default();
        let mut model = HeadModel::new(small()).unwrap();
        let before = model.clone();
        let log = train_toy(&mut model, &data, &rigs, &w, AdamConfig::default(), 0).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(model, before);
        let adam = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let log = train_toy(&mut model, &data, &rigs, &w, adam, 4).unwrap();
        assert_eq!(log.epochs.len(), 4);
        assert!(log.epochs.iter().all(|e| e.loss == log.epochs[0].loss));
        assert_eq!(model, before);
    }

    #[test]
    fn training_reduces_loss_and_logs_csv() {
        let rigs = rigs();
        let data: Vec<_> = (0..4).map(|i| sample(&rigs, 20 + i, true)).collect();
        let w = HandLossWeights::default();
        let mut model = HeadModel::new(small()).unwrap();
        let adam = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let log = train_toy(&mut model, &data, &rigs, &w, adam, 40).unwrap();
        let first = log.epochs[0].loss.total;
        let last = evaluate_loss(&model, &data, &rigs, &w).unwrap().total;
        assert!(last < first, "{first} -> {last}");
        let mut csv = Vec::new();
        log.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("epoch,L_joints,L_interhand,L_vertices,L_MANO,L_total\n1,"));
        assert_eq!(text.lines().count(), 41);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut model = HeadModel::new(small()).unwrap();
        let r = train_toy(&mut model, &[], &rigs(), &HandLossWeights::default(), AdamConfig::default(), 1);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
