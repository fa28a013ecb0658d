//! Toy conditioned diffusion transformer trained with flow matching.
//!
//! One block: adaptive scale/shift computed from the global condition plus a
//! flow-time embedding, pre-norm multi-head self-attention over latent
//! tokens, additive per-token injection of the frame condition, and a ×4 MLP.
//! Sampling integrates the learned velocity field with Euler steps from pure
//! noise; the long-form loop samples each clip against its absolute window
//! and concatenates.

pub mod train;

use crate::adapters::{fuse_frame, fuse_global, latent_window, GlobalFeatureBundle};
use crate::conditioning::{
    build_frame_condition, build_global_condition, scaled_normal, timestamp_embed,
    ConditioningConfig,
};
use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::stream::{concat_clips, LatentSequence, SplicePoints, StreamKind, TokenStream};
use crate::tensor::graph::{Graph, Var, LAYER_NORM_EPS};
use crate::tensor::store::ParameterStore;
use crate::tensor::{DenseTensor, Scalar};
use serde::{Deserialize, Serialize};

/// Transformer shape and sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiTConfig {
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub latent_dim: usize,
    /// Euler integration steps for sampling.
    pub steps: usize,
}

impl Default for DiTConfig {
    fn default() -> Self {
        DiTConfig { n_layers: 4, hidden_dim: 64, n_heads: 4, latent_dim: 20, steps: 8 }
    }
}

impl DiTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::Config("n_layers must be ≥ 1".into()));
        }
        if self.hidden_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Config("hidden_dim and latent_dim must be positive".into()));
        }
        if self.n_heads == 0 || self.hidden_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} must be divisible by n_heads {}",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("sampler steps must be ≥ 1".into()));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }
}

fn ones_gain<S: Scalar>(dim: usize) -> DenseTensor<S> {
    DenseTensor::full(&[dim], S::one())
}

/// Register all `dit.*` parameters for `cfg` in `store`.
pub fn init_dit_params<S: Scalar>(
    store: &mut ParameterStore<S>,
    cfg: &DiTConfig,
    rng: &mut DetRng,
) -> Result<()> {
    if cfg.n_heads == 0 || cfg.hidden_dim % cfg.n_heads != 0 {
        return Err(Error::Config(format!(
            "hidden_dim {} must be divisible by n_heads {}",
            cfg.hidden_dim, cfg.n_heads
        )));
    }
    let h = cfg.hidden_dim;
    let mat = |store: &mut ParameterStore<S>, name: String, r: usize, c: usize| -> Result<()> {
        let mut nrng = rng.derive(&name);
        store.insert(&name, scaled_normal(&mut nrng, r, c))?;
        Ok(())
    };
    mat(store, "dit.in.w".into(), cfg.latent_dim, h)?;
    store.insert("dit.in.b", DenseTensor::zeros(&[h]))?;
    for l in 0..cfg.n_layers {
        let p = format!("dit.layer{l}");
        mat(store, format!("{p}.mod.w"), 2 * h, 2 * h)?;
        store.insert(&format!("{p}.mod.b"), DenseTensor::zeros(&[2 * h]))?;
        store.insert(&format!("{p}.ln1.gain"), ones_gain(h))?;
        store.insert(&format!("{p}.ln1.bias"), DenseTensor::zeros(&[h]))?;
        // No key bias: a per-key constant shifts every pre-softmax score in a
        // row equally, so softmax cancels it and its gradient is identically
        // zero — it would be dead weight.
        for part in ["q", "v", "o"] {
            mat(store, format!("{p}.attn.{part}.w"), h, h)?;
            store.insert(&format!("{p}.attn.{part}.b"), DenseTensor::zeros(&[h]))?;
        }
        mat(store, format!("{p}.attn.k.w"), h, h)?;
        mat(store, format!("{p}.cf.w"), h, h)?;
        store.insert(&format!("{p}.cf.b"), DenseTensor::zeros(&[h]))?;
        store.insert(&format!("{p}.ln2.gain"), ones_gain(h))?;
        store.insert(&format!("{p}.ln2.bias"), DenseTensor::zeros(&[h]))?;
        mat(store, format!("{p}.mlp.in.w"), h, 4 * h)?;
        store.insert(&format!("{p}.mlp.in.b"), DenseTensor::zeros(&[4 * h]))?;
        mat(store, format!("{p}.mlp.out.w"), 4 * h, h)?;
        store.insert(&format!("{p}.mlp.out.b"), DenseTensor::zeros(&[h]))?;
    }
    store.insert("dit.final_ln.gain", ones_gain(h))?;
    store.insert("dit.final_ln.bias", DenseTensor::zeros(&[h]))?;
    mat(store, "dit.out.w".into(), h, cfg.latent_dim)?;
    store.insert("dit.out.b", DenseTensor::zeros(&[cfg.latent_dim]))?;
    Ok(())
}

/// `x·W + b` with parameters looked up by name.
fn linear<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    x: Var,
    w: &str,
    b: &str,
) -> Result<Var> {
    let wv = g.param(store, w)?;
    let bv = g.param(store, b)?;
    let y = g.matmul(x, wv)?;
    g.add_bias(y, bv)
}

/// Broadcast a `[1×d]` row to `[rows×d]` via a ones-column matmul, keeping
/// the result differentiable w.r.t. the row.
fn broadcast_row<S: Scalar>(g: &mut Graph<S>, row: Var, rows: usize) -> Result<Var> {
    let ones = g.constant(DenseTensor::full(&[rows, 1], S::one()));
    g.matmul(ones, row)
}

/// Velocity field of the flow at time `flow_t`.
///
/// `x` is `[T_a×latent_dim]`, `c_g` is `[1×2·hidden]`, `c_f` is
/// `[T_a×hidden]`. Output matches the shape of `x`. With `n_layers == 0`
/// (degenerate test config) the input projection, final norm and output head
/// still apply.
pub fn dit_forward<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    cfg: &DiTConfig,
    x: Var,
    c_g: Var,
    c_f: Var,
    flow_t: f64,
) -> Result<Var> {
    let h = cfg.hidden_dim;
    let t_a = g.value(x).shape()[0];
    if g.value(x).rank() != 2 || g.value(x).shape()[1] != cfg.latent_dim {
        return Err(Error::Shape(format!(
            "latents must be [T×{}], got {:?}",
            cfg.latent_dim,
            g.value(x).shape()
        )));
    }
    if g.value(c_f).shape() != [t_a, h] {
        return Err(Error::Shape(format!(
            "frame condition {:?} does not match latents [{t_a}×{h}]",
            g.value(c_f).shape()
        )));
    }
    if g.value(c_g).shape() != [1, 2 * h] {
        return Err(Error::Shape(format!(
            "global condition must be [1×{}], got {:?}",
            2 * h,
            g.value(c_g).shape()
        )));
    }

    let t_emb = g.constant(timestamp_embed::<S>(flow_t, 2 * h)?);
    let cond = g.add(c_g, t_emb)?;

    let mut state = linear(g, store, x, "dit.in.w", "dit.in.b")?;
    for l in 0..cfg.n_layers {
        let p = format!("dit.layer{l}");

        // Adaptive modulation: scale/shift halves of a learned map of cond.
        let m = linear(g, store, cond, &format!("{p}.mod.w"), &format!("{p}.mod.b"))?;
        let scale = g.narrow(m, 1, 0, h)?;
        let shift = g.narrow(m, 1, h, h)?;
        let gain = g.param(store, &format!("{p}.ln1.gain"))?;
        let bias = g.param(store, &format!("{p}.ln1.bias"))?;
        let xn = g.layer_norm(state, gain, bias, LAYER_NORM_EPS)?;
        let scale1p = g.add_const(scale, 1.0);
        let scale_b = broadcast_row(g, scale1p, t_a)?;
        let shift_b = broadcast_row(g, shift, t_a)?;
        let modulated = g.mul(xn, scale_b)?;
        let modulated = g.add(modulated, shift_b)?;

        // Multi-head self-attention over latent tokens.
        let q = linear(g, store, modulated, &format!("{p}.attn.q.w"), &format!("{p}.attn.q.b"))?;
        let kw = g.param(store, &format!("{p}.attn.k.w"))?;
        let k = g.matmul(modulated, kw)?;
        let v = linear(g, store, modulated, &format!("{p}.attn.v.w"), &format!("{p}.attn.v.b"))?;
        let dh = cfg.head_dim();
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for j in 0..cfg.n_heads {
            let qj = g.narrow(q, 1, j * dh, dh)?;
            let kj = g.narrow(k, 1, j * dh, dh)?;
            let vj = g.narrow(v, 1, j * dh, dh)?;
            heads.push(g.attention(qj, kj, vj)?);
        }
        let att = g.concat(1, &heads)?;
        let att = linear(g, store, att, &format!("{p}.attn.o.w"), &format!("{p}.attn.o.b"))?;
        state = g.add(state, att)?;

        // Per-token frame-condition injection.
        let cfp = linear(g, store, c_f, &format!("{p}.cf.w"), &format!("{p}.cf.b"))?;
        state = g.add(state, cfp)?;

        // Pre-norm ×4 MLP.
        let gain2 = g.param(store, &format!("{p}.ln2.gain"))?;
        let bias2 = g.param(store, &format!("{p}.ln2.bias"))?;
        let xn2 = g.layer_norm(state, gain2, bias2, LAYER_NORM_EPS)?;
        let m1 = linear(g, store, xn2, &format!("{p}.mlp.in.w"), &format!("{p}.mlp.in.b"))?;
        let m1 = g.gelu(m1);
        let m2 = linear(g, store, m1, &format!("{p}.mlp.out.w"), &format!("{p}.mlp.out.b"))?;
        state = g.add(state, m2)?;
    }

    let gain = g.param(store, "dit.final_ln.gain")?;
    let bias = g.param(store, "dit.final_ln.bias")?;
    let out = g.layer_norm(state, gain, bias, LAYER_NORM_EPS)?;
    linear(g, store, out, "dit.out.w", "dit.out.b")
}

/// The interpolation draw underlying one flow-matching loss term.
#[derive(Debug, Clone)]
pub struct CfmDraw<S> {
    pub t: f64,
    pub eps: DenseTensor<S>,
}

/// Flow-matching loss with an explicit draw: `x_t = (1−t)·ε + t·target`,
/// loss = MSE(velocity prediction, target − ε). Returns the loss, the
/// predicted velocity, and the draw, so callers can recompute the MSE.
pub fn cfm_loss_with_draw<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    cfg: &DiTConfig,
    target: &DenseTensor<S>,
    c_g: Var,
    c_f: Var,
    t: f64,
    eps: &DenseTensor<S>,
) -> Result<(Var, Var)> {
    if eps.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "noise shape {:?} does not match target {:?}",
            eps.shape(),
            target.shape()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("flow time {t} outside [0, 1]")));
    }
    let ts = S::from_f64(t);
    let one_minus = S::from_f64(1.0 - t);
    let mut xt = target.clone();
    for (o, (&tv, &ev)) in
        xt.data_mut().iter_mut().zip(target.data().iter().zip(eps.data()))
    {
        *o = one_minus * ev + ts * tv;
    }
    let xt = g.constant(xt);
    let pred = dit_forward(g, store, cfg, xt, c_g, c_f, t)?;

    let mut vel = target.clone();
    for (o, &ev) in vel.data_mut().iter_mut().zip(eps.data()) {
        *o -= ev;
    }
    let vel = g.constant(vel);
    let diff = g.sub(pred, vel)?;
    let sq = g.mul(diff, diff)?;
    Ok((g.mean_all(sq), pred))
}

/// Flow-matching loss with `t ~ U(0,1)` and `ε ~ N(0,I)` drawn from `rng`.
pub fn cfm_loss<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    cfg: &DiTConfig,
    target: &DenseTensor<S>,
    c_g: Var,
    c_f: Var,
    rng: &mut DetRng,
) -> Result<(Var, Var, CfmDraw<S>)> {
    let t = rng.uniform();
    let mut eps = DenseTensor::<S>::zeros(target.shape());
    for v in eps.data_mut() {
        *v = S::from_f64(rng.normal());
    }
    let (loss, pred) = cfm_loss_with_draw(g, store, cfg, target, c_g, c_f, t, &eps)?;
    Ok((loss, pred, CfmDraw { t, eps }))
}

/// Euler integration of the velocity field from pure noise.
///
/// `x_0 ~ N(0,I)`, `x_{k+1} = x_k + (1/steps)·v(x_k, k/steps)`. The token
/// count comes from the frame condition. Deterministic given `rng`.
pub fn sample_euler<S: Scalar>(
    store: &ParameterStore<S>,
    cfg: &DiTConfig,
    c_g: &DenseTensor<S>,
    c_f: &DenseTensor<S>,
    rng: &mut DetRng,
) -> Result<DenseTensor<S>> {
    if cfg.steps == 0 {
        return Err(Error::Contract("sampler steps must be ≥ 1".into()));
    }
    let t_a = c_f.shape()[0];
    let mut x = DenseTensor::<S>::zeros(&[t_a, cfg.latent_dim]);
    for v in x.data_mut() {
        *v = S::from_f64(rng.normal());
    }
    let dt = S::from_f64(1.0 / cfg.steps as f64);
    for k in 0..cfg.steps {
        let t = k as f64 / cfg.steps as f64;
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let cg = g.constant(c_g.clone());
        let cf = g.constant(c_f.clone());
        let vel = dit_forward(&mut g, store, cfg, xv, cg, cf, t)?;
        for (xi, &vi) in x.data_mut().iter_mut().zip(g.value(vel).data()) {
            *xi += dt * vi;
        }
    }
    Ok(x)
}

/// Feature streams for one clip plus its absolute window in the parent video.
#[derive(Debug, Clone)]
pub struct ClipStreams<S> {
    pub clip_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub visual: TokenStream<S>,
    pub text: TokenStream<S>,
    pub sync: TokenStream<S>,
}

impl<S: Scalar> ClipStreams<S> {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

fn check_contiguous<S: Scalar>(clips: &[ClipStreams<S>]) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::Contract("need at least one clip".into()));
    }
    if clips[0].start_s.abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "first clip starts at {} s, not 0",
            clips[0].start_s
        )));
    }
    for w in clips.windows(2) {
        if (w[1].start_s - w[0].end_s).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "clips {} and {} are not contiguous: {} s vs {} s",
                w[0].clip_id, w[1].clip_id, w[0].end_s, w[1].start_s
            )));
        }
    }
    for c in clips {
        if c.end_s <= c.start_s {
            return Err(Error::Contract(format!("clip {} has non-positive duration", c.clip_id)));
        }
    }
    Ok(())
}

/// Evaluate one clip's conditions (optionally fused with the global bundle)
/// and sample its latents. Noise draws are independent of whether fusion is
/// applied, so zero-initialized adapters reproduce the baseline bitwise.
fn sample_clip<S: Scalar>(
    store: &ParameterStore<S>,
    dit_cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    clip: &ClipStreams<S>,
    bundle: Option<&GlobalFeatureBundle<S>>,
    rng: &mut DetRng,
) -> Result<LatentSequence<S>> {
    let (lo, hi) = latent_window(clip.start_s, clip.end_s);
    if hi <= lo {
        return Err(Error::Contract(format!(
            "clip {} window is empty at the latent rate",
            clip.clip_id
        )));
    }
    let t_a = hi - lo;

    let mut g = Graph::new();
    let cf = build_frame_condition(&mut g, store, &clip.sync)?;
    let cf = g.align_rows(cf, t_a, 1)?;
    let t_start = if cond_cfg.absolute_time { clip.start_s } else { 0.0 };
    let cg = build_global_condition(&mut g, store, cond_cfg, &clip.visual, &clip.text, t_start)?;
    let (cg, cf) = match bundle {
        Some(b) => {
            let cg = fuse_global(&mut g, store, cg, b, crate::adapters::GLOBAL_ADAPTER)?;
            let cf = fuse_frame(
                &mut g,
                store,
                cf,
                b,
                crate::adapters::SYN_ADAPTER,
                (clip.start_s, clip.end_s),
            )?;
            (cg, cf)
        }
        None => (cg, cf),
    };
    let cg_val = g.value(cg).clone();
    let cf_val = g.value(cf).clone();
    drop(g);

    let latents = sample_euler(store, dit_cfg, &cg_val, &cf_val, rng)?;
    LatentSequence::with_duration(latents, clip.duration_s())
}

fn generate_impl<S: Scalar>(
    store: &ParameterStore<S>,
    dit_cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    clips: &[ClipStreams<S>],
    bundle: Option<&GlobalFeatureBundle<S>>,
    seed: u64,
) -> Result<(LatentSequence<S>, SplicePoints)> {
    check_contiguous(clips)?;
    if let Some(b) = bundle {
        let total = clips.last().expect("non-empty").end_s;
        if total > b.duration_s() + 1e-6 {
            return Err(Error::Contract(format!(
                "clips span {total} s but the global bundle covers only {} s",
                b.duration_s()
            )));
        }
    }
    let base = DetRng::new(seed, "generate");
    let parts = clips
        .iter()
        .enumerate()
        .map(|(i, clip)| {
            let mut rng = base.derive(&format!("clip.{i}"));
            sample_clip(store, dit_cfg, cond_cfg, clip, bundle, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    concat_clips(&parts)
}

/// Long-form generation with adapter fusion against the global bundle.
pub fn generate_long_form<S: Scalar>(
    store: &ParameterStore<S>,
    dit_cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    clips: &[ClipStreams<S>],
    bundle: &GlobalFeatureBundle<S>,
    seed: u64,
) -> Result<(LatentSequence<S>, SplicePoints)> {
    generate_impl(store, dit_cfg, cond_cfg, clips, Some(bundle), seed)
}

/// Per-clip independent baseline: no global bundle, no fusion.
pub fn generate_long_form_baseline<S: Scalar>(
    store: &ParameterStore<S>,
    dit_cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    clips: &[ClipStreams<S>],
    seed: u64,
) -> Result<(LatentSequence<S>, SplicePoints)> {
    generate_impl(store, dit_cfg, cond_cfg, clips, None, seed)
}

/// Slice a parent-video stream to a clip window at the stream's own rate,
/// using the same rounding law as the latent windows.
pub fn slice_stream_window<S: Scalar>(
    stream: &TokenStream<S>,
    start_s: f64,
    end_s: f64,
) -> Result<TokenStream<S>> {
    if stream.kind == StreamKind::Text || stream.rate_fps == 0.0 {
        // Positionless streams travel whole.
        return Ok(stream.clone());
    }
    let t = stream.len();
    let lo = ((start_s * stream.rate_fps).round() as usize).min(t);
    let hi = ((end_s * stream.rate_fps).round() as usize).min(t);
    if hi <= lo {
        return Err(Error::Contract(format!(
            "window [{start_s}, {end_s}] is empty at {} fps",
            stream.rate_fps
        )));
    }
    let dim = stream.dim();
    let mut data = Vec::with_capacity((hi - lo) * dim);
    for r in lo..hi {
        data.extend_from_slice(stream.tokens.row(r));
    }
    TokenStream::new(stream.kind, stream.rate_fps, DenseTensor::from_vec(vec![hi - lo, dim], data)?)
}
