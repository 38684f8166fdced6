use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    attention_on_tape, contract, AttentionConfig, AttentionError, AttentionParams, AttentionWeights, KeySampling,
    N_P_SCHEDULE, TRUNCATION_RADIUS,
};
use crate::geometry::{make_rig, DepthMap, ViewId, RIG_RADIUS};
use crate::synthscene::SCENE_RADIUS;
use crate::tensorcore::{uniform_init, BiasAxis, ParamStore, Scalar, Tape, Tensor, Var};

/// Which cross-view block runs inside each decoder level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Truncated,
    /// Full-line attention at levels up to `full_max_resolution`, none above.
    Full,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Side of the level-1 input.
    pub base_resolution: usize,
    pub levels: usize,
    pub d: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub n_p: Vec<usize>,
    pub r: f64,
    pub residual: bool,
    pub use_plucker: bool,
    pub front_condition: bool,
    pub mode: AttentionMode,
    pub full_max_resolution: usize,
    pub z_range: (f64, f64),
    pub ortho_scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            base_resolution: 32,
            levels: 4,
            d: 16,
            in_channels: 3,
            out_channels: 3,
            n_p: N_P_SCHEDULE.to_vec(),
            r: TRUNCATION_RADIUS,
            residual: true,
            use_plucker: true,
            front_condition: true,
            mode: AttentionMode::Truncated,
            full_max_resolution: 128,
            z_range: (RIG_RADIUS - SCENE_RADIUS, RIG_RADIUS + SCENE_RADIUS),
            ortho_scale: 1.0,
        }
    }
}

const COND_CHANNELS: usize = 3;

impl DecoderConfig {
    /// Side length at `level` (1-based).
    pub fn resolution(&self, level: usize) -> usize {
        self.base_resolution << (level - 1)
    }

    pub fn output_resolution(&self) -> usize {
        self.resolution(self.levels)
    }

    pub fn attention_config(&self, level: usize) -> AttentionConfig {
        AttentionConfig {
            n_p: self.n_p[level - 1],
            r: self.r,
            d: self.d,
            residual: self.residual,
            use_plucker: self.use_plucker,
            nearest: false,
        }
    }

    fn mix_inputs(&self, level: usize) -> usize {
        let base = if level == 1 { self.in_channels } else { self.d };
        base + if self.front_condition { COND_CHANNELS } else { 0 }
    }

    /// Keys per query of the block at `level`, zero when it is skipped.
    pub fn keys_per_query(&self, level: usize) -> usize {
        match self.mode {
            AttentionMode::Truncated => self.n_p[level - 1],
            AttentionMode::Full if self.resolution(level) <= self.full_max_resolution => self.resolution(level),
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        if self.levels == 0 || self.n_p.len() != self.levels || self.base_resolution < 2 {
            return Err(contract(format!(
                "{} levels with n_p schedule {:?} from base {}",
                self.levels, self.n_p, self.base_resolution
            )));
        }
        if !(self.z_range.1 > self.z_range.0) || !(self.ortho_scale > 0.0) {
            return Err(contract("z_range must be increasing and ortho_scale positive"));
        }
        for level in 1..=self.levels {
            self.attention_config(level).validate()?;
        }
        Ok(())
    }
}

/// Names and shapes of every decoder parameter.
pub fn decoder_param_shapes(cfg: &DecoderConfig) -> Vec<(String, Vec<usize>)> {
    let n_views = ViewId::ALL.len() - 1;
    let mut out = Vec::new();
    for level in 1..=cfg.levels {
        let p = format!("l{level}");
        out.push((format!("{p}.mix.w"), vec![cfg.d, cfg.mix_inputs(level)]));
        out.push((format!("{p}.mix.b"), vec![cfg.d]));
        let a = AttentionWeights::<f32>::zeros(&cfg.attention_config(level), n_views);
        for (name, t) in super::ATTENTION_PARAM_NAMES.iter().zip(a.tensors()) {
            out.push((format!("{p}.attn.{name}"), t.shape().to_vec()));
        }
    }
    out.push(("head.w".into(), vec![cfg.out_channels, cfg.d]));
    out.push(("head.b".into(), vec![cfg.out_channels]));
    out
}

/// Seeded initial weights for every level, including the attention blocks
/// of modes that do not use them, so all variants share one layout.
pub fn init_decoder_weights(cfg: &DecoderConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_views = ViewId::ALL.len() - 1;
    let mut store = ParamStore::new();
    for level in 1..=cfg.levels {
        let p = format!("l{level}");
        let fan_in = cfg.mix_inputs(level);
        store.insert(format!("{p}.mix.w"), uniform_init(&[cfg.d, fan_in], fan_in, &mut rng));
        store.insert(format!("{p}.mix.b"), Tensor::zeros(&[cfg.d]));
        AttentionWeights::init(&cfg.attention_config(level), n_views, &mut rng).store_into(&format!("{p}.attn"), &mut store);
    }
    store.insert("head.w", uniform_init(&[cfg.out_channels, cfg.d], cfg.d, &mut rng));
    store.insert("head.b", Tensor::full(&[cfg.out_channels], 0.5));
    store
}

/// Per-view low-resolution inputs, per-level depth maps and the front-view
/// condition.
#[derive(Clone, Debug)]
pub struct DecoderInput<T: Scalar = f32> {
    /// `[in_channels × base × base]` per view, rig order.
    pub latents: Vec<Tensor<T>>,
    /// `depths[level − 1][view]`, at that level's resolution.
    pub depths: Vec<Vec<DepthMap>>,
    /// `[3 × res × res]` front-view color per level; empty when unused.
    pub front_condition: Vec<Tensor<T>>,
}

fn check_input<T: Scalar>(input: &DecoderInput<T>, cfg: &DecoderConfig) -> Result<(), AttentionError> {
    let n_views = ViewId::ALL.len();
    let b = cfg.base_resolution;
    if input.latents.len() != n_views
        || input
            .latents
            .iter()
            .any(|l| l.shape() != [cfg.in_channels, b, b])
    {
        return Err(contract(format!(
            "need {n_views} latents of shape [{}, {b}, {b}]",
            cfg.in_channels
        )));
    }
    let needs_depth = cfg.mode == AttentionMode::Truncated;
    for level in 1..=cfg.levels {
        let res = cfg.resolution(level);
        if needs_depth {
            let maps = input
                .depths
                .get(level - 1)
                .ok_or_else(|| contract(format!("missing depth for level {level}")))?;
            if maps.len() != n_views || maps.iter().any(|m| m.width != res || m.height != res) {
                return Err(contract(format!("level {level} depth maps must be {n_views} × {res}²")));
            }
        }
        if cfg.front_condition {
            let c = input
                .front_condition
                .get(level - 1)
                .ok_or_else(|| contract(format!("missing front condition for level {level}")))?;
            if c.shape() != [COND_CHANNELS, res, res] {
                return Err(contract(format!("front condition {:?} at level {level}", c.shape())));
            }
        }
    }
    Ok(())
}

fn param(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var, AttentionError> {
    vars.get(name)
        .copied()
        .ok_or_else(|| contract(format!("missing parameter {name}")))
}

/// 1×1 linear layer on a `[c × H × W]` map.
fn pointwise<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var, AttentionError> {
    let s = tape.shape(x).to_vec();
    let flat = tape.reshape(x, &[s[0], s[1] * s[2]])?;
    let y = tape.matmul(w, flat)?;
    let y = tape.add_bias(y, b, BiasAxis::Leading)?;
    let out_c = tape.shape(y)[0];
    Ok(tape.reshape(y, &[out_c, s[1], s[2]])?)
}

/// Runs the stack on `tape` and returns one `[out_channels × S × S]` output
/// per view. Each level mixes features per view (with the front condition
/// appended to the front view), applies the cross-view block with every view
/// as reference against a shared snapshot of the mixed features, and
/// upsamples 2× except after the last level.
pub fn decoder_forward<T: Scalar>(
    tape: &mut Tape<T>,
    input: &DecoderInput<T>,
    cfg: &DecoderConfig,
    vars: &BTreeMap<String, Var>,
) -> Result<Vec<Var>, AttentionError> {
    cfg.validate()?;
    check_input(input, cfg)?;
    let front = ViewId::Front.index();
    let mut h: Vec<Var> = input.latents.iter().map(|l| tape.constant(l.clone())).collect();
    for level in 1..=cfg.levels {
        let res = cfg.resolution(level);
        let p = format!("l{level}");
        let (mix_w, mix_b) = (param(vars, &format!("{p}.mix.w"))?, param(vars, &format!("{p}.mix.b"))?);
        let cond = if cfg.front_condition {
            let c = tape.constant(input.front_condition[level - 1].clone());
            let zeros = tape.constant(Tensor::zeros(&[COND_CHANNELS, res, res]));
            Some((c, zeros))
        } else {
            None
        };
        let mut mixed = Vec::with_capacity(h.len());
        for (v, &x) in h.iter().enumerate() {
            let x = match cond {
                Some((c, zeros)) => tape.concat(&[x, if v == front { c } else { zeros }], 0)?,
                None => x,
            };
            mixed.push(pointwise(tape, x, mix_w, mix_b)?);
        }

        let cams = make_rig(cfg.ortho_scale, res);
        let acfg = cfg.attention_config(level);
        let keys = cfg.keys_per_query(level);
        let attended: Vec<Var> = if keys == 0 {
            mixed.clone()
        } else {
            let params = AttentionParams::from_vars(vars, &format!("{p}.attn"))?;
            let mut out = Vec::with_capacity(mixed.len());
            for v in 0..mixed.len() {
                let sampling = match cfg.mode {
                    AttentionMode::Truncated => KeySampling::Truncated {
                        depth: &input.depths[level - 1][v],
                        n_p: acfg.n_p,
                        r: acfg.r,
                    },
                    _ => KeySampling::Line {
                        z_range: cfg.z_range,
                        n: keys,
                    },
                };
                out.push(attention_on_tape(tape, &mixed, &cams, v, &sampling, &acfg, &params)?.out);
            }
            out
        };

        h = if level < cfg.levels {
            attended
                .into_iter()
                .map(|x| tape.upsample2x(x))
                .collect::<Result<_, _>>()?
        } else {
            attended
        };
    }
    let (head_w, head_b) = (param(vars, "head.w")?, param(vars, "head.b")?);
    h.into_iter().map(|x| pointwise(tape, x, head_w, head_b)).collect()
}

/// Records every tensor of `store` on `tape`, cast to `T`.
pub fn register_store<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore, trainable: bool) -> BTreeMap<String, Var> {
    store
        .iter()
        .map(|(name, t)| {
            let t = t.cast::<T>();
            let v = if trainable { tape.param(t) } else { tape.constant(t) };
            (name.clone(), v)
        })
        .collect()
}

/// Value-level forward pass: one `[out_channels × S × S]` image per view.
pub fn decoder_stack(
    input: &DecoderInput<f32>,
    cfg: &DecoderConfig,
    weights: &ParamStore,
) -> Result<Vec<Tensor<f32>>, AttentionError> {
    for (name, shape) in decoder_param_shapes(cfg) {
        weights.get_shaped(&name, &shape)?;
    }
    let mut tape = Tape::new();
    let vars = register_store(&mut tape, weights, false);
    let outs = decoder_forward(&mut tape, input, cfg, &vars)?;
    Ok(outs.into_iter().map(|v| tape.value(v).clone()).collect())
}
