use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::mano::{HandSide, ManoParams, PARAM_DIM};
use crate::repr::EventCloud;

/// Which branch supplies keys and values to each query branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionMode {
    /// Left queries attend over right keys and values, and vice versa.
    #[default]
    Cross,
    /// Ablation: every branch attends over itself.
    SelfAttention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub point_feature_dims: Vec<usize>,
    pub global_dim: usize,
    pub attn_dim: usize,
    pub heads: usize,
    /// Learned tokens per branch.
    pub tokens: usize,
    /// Hidden widths followed by the 31-wide output.
    pub decoder_dims: Vec<usize>,
    pub attention: AttentionMode,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            point_feature_dims: vec![5, 64, 128],
            global_dim: 128,
            attn_dim: 64,
            heads: 1,
            tokens: 4,
            decoder_dims: vec![128, PARAM_DIM],
            attention: AttentionMode::Cross,
            seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let enc = &self.point_feature_dims;
        if enc.len() < 2 || enc[0] != 5 {
            return bad(format!("encoder widths must start at 5 and have a layer, got {enc:?}"));
        }
        if enc.last() != Some(&self.global_dim) {
            return bad(format!("last encoder width {:?} must equal global_dim {}", enc.last(), self.global_dim));
        }
        if self.decoder_dims.last() != Some(&PARAM_DIM) {
            return bad(format!("decoder must end at {PARAM_DIM}, got {:?}", self.decoder_dims));
        }
        if self.heads == 0 || self.attn_dim == 0 || !self.attn_dim.is_multiple_of(self.heads) {
            return bad(format!("attn_dim {} not divisible into {} heads", self.attn_dim, self.heads));
        }
        if self.tokens == 0 || enc.contains(&0) || self.decoder_dims.contains(&0) {
            return bad("zero-width layer".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadModel {
    config: HeadConfig,
    params: Vec<NamedTensor>,
}

const SIDES: [(HandSide, &str); 2] = [(HandSide::Left, "left"), (HandSide::Right, "right")];

/// Parameter names and shapes in storage order.
pub(crate) fn layout(c: &HeadConfig) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let linear = |out: &mut Vec<_>, name: String, i: usize, o: usize| {
        out.push((format!("{name}.weight"), i, o));
        out.push((format!("{name}.bias"), 1, o));
    };
    for (l, w) in c.point_feature_dims.windows(2).enumerate() {
        linear(&mut out, format!("encoder.{l}"), w[0], w[1]);
    }
    for (_, s) in SIDES {
        linear(&mut out, format!("token.{s}"), c.global_dim, c.tokens * c.attn_dim);
    }
    for (_, s) in SIDES {
        for p in ["q", "k", "v"] {
            out.push((format!("attn.{s}.{p}"), c.attn_dim, c.attn_dim));
        }
    }
    for (_, s) in SIDES {
        let mut prev = c.tokens * c.attn_dim;
        for (l, &w) in c.decoder_dims.iter().enumerate() {
            linear(&mut out, format!("decoder.{s}.{l}"), prev, w);
            prev = w;
        }
    }
    out
}

impl HeadModel {
    /// Draws every parameter uniformly from ±1/√fan_in, in layout order.
    pub fn new(config: HeadConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        let mut fan_in = 1;
        for (name, r, c) in layout(&config) {
            // biases share the fan-in of the weight before them
            if name.ends_with(".weight") || name.starts_with("attn.") {
                fan_in = r;
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..r * c).map(|_| rng.gen_range(-bound..bound)).collect();
            params.push(NamedTensor {
                name,
                tensor: Tensor::matrix(r, c, data)?,
            });
        }
        Ok(Self { config, params })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_parameters(config: HeadConfig, params: Vec<NamedTensor>) -> Result<Self> {
        config.validate()?;
        let want = layout(&config);
        if want.len() != params.len() {
            return Err(Error::ShapeMismatch(format!("{} tensors, expected {}", params.len(), want.len())));
        }
        for ((name, r, c), p) in want.iter().zip(&params) {
            if &p.name != name || p.tensor.shape != [*r, *c] {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {} {:?}, expected {name} [{r}, {c}]",
                    p.name, p.tensor.shape
                )));
            }
            if p.tensor.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[NamedTensor] {
        &self.params
    }

    pub(crate) fn parameters_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.data.len()).sum()
    }

    /// Records the network on `tape` and returns the `1 × 31` rows for the
    /// left and right hands. Parameter ids are positions in `parameters()`.
    pub fn build(&self, tape: &mut Tape<'_>, cloud: &EventCloud) -> Result<[Var; 2]> {
        let c = &self.config;
        let p: Vec<Var> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.tensor.clone()))
            .collect();
        let mut next = 0;
        let mut take = || {
            next += 1;
            p[next - 1]
        };

        let enc_layers = c.point_feature_dims.len() - 1;
        let real = cloud.real_points();
        let global = if real.is_empty() {
            (0..enc_layers * 2).for_each(|_| {
                take();
            });
            tape.leaf(Tensor::zeros(1, c.global_dim))
        } else {
            let x: Vec<f64> = real.iter().flat_map(|q| q.features().map(f64::from)).collect();
            let mut h = tape.leaf(Tensor::matrix(real.len(), 5, x)?);
            for _ in 0..enc_layers {
                let (w, b) = (take(), take());
                let z = tape.matmul(h, w)?;
                let z = tape.add_row(z, b)?;
                h = tape.relu(z);
            }
            tape.col_max(h)
        };

        let mut tokens = Vec::new();
        for _ in SIDES {
            let (w, b) = (take(), take());
            let z = tape.matmul(global, w)?;
            let z = tape.add_row(z, b)?;
            tokens.push(tape.reshape(z, c.tokens, c.attn_dim)?);
        }
        let mut qkv = Vec::new();
        for &t in &tokens {
            let (wq, wk, wv) = (take(), take(), take());
            qkv.push([tape.matmul(t, wq)?, tape.matmul(t, wk)?, tape.matmul(t, wv)?]);
        }

        let dh = c.attn_dim / c.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outputs = [tokens[0]; 2];
        for s in 0..2 {
            let src = match c.attention {
                AttentionMode::Cross => 1 - s,
                AttentionMode::SelfAttention => s,
            };
            let [q, _, _] = qkv[s];
            let [_, k, v] = qkv[src];
            let mut per_head = Vec::with_capacity(c.heads);
            for h in 0..c.heads {
                let (qh, kh, vh) = if c.heads == 1 {
                    (q, k, v)
                } else {
                    (
                        tape.slice_cols(q, h * dh, dh)?,
                        tape.slice_cols(k, h * dh, dh)?,
                        tape.slice_cols(v, h * dh, dh)?,
                    )
                };
                let logits = tape.matmul_nt(qh, kh)?;
                let logits = tape.scale(logits, scale);
                let a = tape.softmax_rows(logits);
                per_head.push(tape.matmul(a, vh)?);
            }
            let att = if per_head.len() == 1 {
                per_head[0]
            } else {
                tape.concat_cols(&per_head)?
            };
            let z = tape.add(tokens[s], att)?;
            outputs[s] = tape.reshape(z, 1, c.tokens * c.attn_dim)?;
        }

        for out in outputs.iter_mut() {
            let layers = c.decoder_dims.len();
            for l in 0..layers {
                let (w, b) = (take(), take());
                let z = tape.matmul(*out, w)?;
                *out = tape.add_row(z, b)?;
                if l + 1 < layers {
                    *out = tape.relu(*out);
                }
            }
        }
        Ok(outputs)
    }
}

/// Decodes a cloud into left and right hand parameters.
pub fn forward_head(model: &HeadModel, cloud: &EventCloud) -> Result<(ManoParams, ManoParams)> {
    let mut tape = Tape::new();
    let [l, r] = model.build(&mut tape, cloud)?;
    let left = ManoParams::from_vector(&tape.value(l).data, HandSide::Left)?;
    let right = ManoParams::from_vector(&tape.value(r).data, HandSide::Right)?;
    if !left.is_finite() || !right.is_finite() {
        return Err(Error::NonFinite("head output".into()));
    }
    Ok((left, right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::CloudPoint;

    fn random_cloud(n: usize, budget: usize, seed: u64) -> EventCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| CloudPoint {
                x: rng.gen_range(0.0..1.0),
                y: rng.gen_range(0.0..1.0),
                t: rng.gen_range(0.0..1.0),
                p: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                n: 1.0,
            })
            .collect();
        EventCloud::from_real_points(pts, budget).unwrap()
    }

    fn small() -> HeadConfig {
        HeadConfig {
            point_feature_dims: vec![5, 16, 32],
            global_dim: 32,
            attn_dim: 8,
            heads: 2,
            tokens: 4,
            decoder_dims: vec![16, PARAM_DIM],
            seed: 3,
            ..HeadConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(HeadConfig::default().validate().is_ok());
        let mut c = HeadConfig::default();
        c.point_feature_dims[0] = 4;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = HeadConfig::default();
        c.decoder_dims = vec![128, 30];
        assert!(c.validate().is_err());
        let mut c = HeadConfig::default();
        c.heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = HeadModel::new(small()).unwrap();
        let b = HeadModel::new(small()).unwrap();
        assert_eq!(a, b);
        let c = HeadModel::new(HeadConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a, c);
        let enc = &a.parameters()[0];
        assert_eq!(enc.name, "encoder.0.weight");
        let bound = 1.0 / 5f64.sqrt();
        assert!(enc.tensor.data.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn permutation_and_padding_do_not_change_output() {
        let model = HeadModel::new(small()).unwrap();
        let cloud = random_cloud(40, 64, 1);
        let base = forward_head(&model, &cloud).unwrap();
        let mut pts = cloud.real_points().to_vec();
        pts.reverse();
        pts.swap(3, 17);
        let permuted = EventCloud::from_real_points(pts.clone(), 64).unwrap();
        assert_eq!(forward_head(&model, &permuted).unwrap(), base);
        let padded = EventCloud::from_real_points(pts, 512).unwrap();
        assert_eq!(forward_head(&model, &padded).unwrap(), base);
    }

    #[test]
    fn empty_cloud_decodes_zero_feature() {
        let model = HeadModel::new(small()).unwrap();
        let a = forward_head(&model, &EventCloud::empty(64)).unwrap();
        let b = forward_head(&model, &EventCloud::empty(8)).unwrap();
        assert_eq!(a, b);
        assert!(a.0.is_finite() && a.1.is_finite());
    }

    #[test]
    fn self_attention_differs_from_cross() {
        let cross = HeadModel::new(small()).unwrap();
        let selfm = HeadModel::from_parameters(
            HeadConfig {
                attention: AttentionMode::SelfAttention,
                ..small()
            },
            cross.parameters().to_vec(),
        )
        .unwrap();
        let cloud = random_cloud(30, 32, 9);
        let (a, b) = (forward_head(&cross, &cloud).unwrap(), forward_head(&selfm, &cloud).unwrap());
        assert!(a.0.is_finite() && b.0.is_finite());
        assert_ne!(a, b);
    }

    #[test]
    fn from_parameters_rejects_wrong_layout() {
        let m = HeadModel::new(small()).unwrap();
        let mut p = m.parameters().to_vec();
        p.pop();
        assert!(HeadModel::from_parameters(small(), p).is_err());
        let mut p = m.parameters().to_vec();
        p[0].tensor.data[0] = f64::NAN;
        assert!(matches!(HeadModel::from_parameters(small(), p), Err(Error::NonFinite(_))));
    }
}
