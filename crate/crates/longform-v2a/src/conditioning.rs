//! Conditioning signals for the generator.
//!
//! Two signals feed every DiT layer:
//!
//! - **Frame condition `c_f`**: sync tokens projected to `hidden_dim`, then
//!   resampled from 24 fps to the 31.25 fps latent rate.
//! - **Global condition `c_g`**: visual and text tokens projected, mean-pooled
//!   over time, concatenated (length `2·hidden_dim`), then fused additively
//!   with a learned linear map of a sinusoidal timestamp embedding.
//!
//! All construction happens on the gradient tape so projection weights train
//! in the full fine-tuning regime and the same code path serves inference.

use crate::error::{Error, Result};
use crate::stream::{StreamDims, StreamKind, TokenStream, LATENT_FPS};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::store::ParameterStore;
use crate::tensor::{DenseTensor, Scalar};
use crate::rng::DetRng;
use serde::{Deserialize, Serialize};

/// Configuration for condition construction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConditioningConfig {
    /// Projection target for every stream kind.
    pub hidden_dim: usize,
    /// Sinusoidal embedding width (must be even).
    pub timestamp_dim: usize,
    /// Timestamps measured from the start of the parent video (`true`) or of
    /// the clip (`false`). Video-absolute is the default: the global condition
    /// is meant to localize a clip within the long-form timeline.
    pub absolute_time: bool,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig { hidden_dim: 64, timestamp_dim: 64, absolute_time: true }
    }
}

impl ConditioningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("conditioning hidden_dim must be ≥ 1".into()));
        }
        if self.timestamp_dim == 0 || self.timestamp_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "timestamp_dim must be even and ≥ 2, got {}",
                self.timestamp_dim
            )));
        }
        Ok(())
    }
}

/// Frame-aligned condition at the latent rate: `[T_a × hidden_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCondition<S> {
    pub tokens: DenseTensor<S>,
}

/// Clip-level condition after timestamp fusion: `[2·hidden_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCondition<S> {
    pub vector: DenseTensor<S>,
}

/// Parameter names used by the conditioning layers.
pub mod names {
    pub const VISUAL_W: &str = "cond.proj.visual.w";
    pub const VISUAL_B: &str = "cond.proj.visual.b";
    pub const TEXT_W: &str = "cond.proj.text.w";
    pub const TEXT_B: &str = "cond.proj.text.b";
    pub const SYNC_W: &str = "cond.proj.sync.w";
    pub const SYNC_B: &str = "cond.proj.sync.b";
    pub const TS_W: &str = "cond.ts.w";
    pub const TS_B: &str = "cond.ts.b";
}

/// Normal(0, 1/√fan_in) matrix.
pub(crate) fn scaled_normal<S: Scalar>(
    rng: &mut DetRng,
    rows: usize,
    cols: usize,
) -> DenseTensor<S> {
    let std = 1.0 / (rows as f64).sqrt();
    let mut t = DenseTensor::<S>::zeros(&[rows, cols]);
    for v in t.data_mut() {
        *v = S::from_f64(rng.normal() * std);
    }
    t
}

/// Register all conditioning parameters (projections per stream kind plus the
/// timestamp fusion map) in `store`, initialized from `rng`.
pub fn init_conditioning_params<S: Scalar>(
    store: &mut ParameterStore<S>,
    dims: &StreamDims,
    cfg: &ConditioningConfig,
    rng: &mut DetRng,
) -> Result<()> {
    cfg.validate()?;
    let h = cfg.hidden_dim;
    let mut proj = |name_w: &str, name_b: &str, in_dim: usize, rng: &mut DetRng| -> Result<()> {
        store.insert(name_w, scaled_normal(rng, in_dim, h))?;
        store.insert(name_b, DenseTensor::zeros(&[h]))
    };
    proj(names::VISUAL_W, names::VISUAL_B, dims.visual, &mut rng.derive("cond.visual"))?;
    proj(names::TEXT_W, names::TEXT_B, dims.text, &mut rng.derive("cond.text"))?;
    proj(names::SYNC_W, names::SYNC_B, dims.sync, &mut rng.derive("cond.sync"))?;
    let mut ts_rng = rng.derive("cond.ts");
    store.insert(names::TS_W, scaled_normal(&mut ts_rng, cfg.timestamp_dim, 2 * h))?;
    store.insert(names::TS_B, DenseTensor::zeros(&[2 * h]))?;
    Ok(())
}

/// Sinusoidal embedding of a scalar time: interleaved pairs
/// `(sin(t/ω_k), cos(t/ω_k))` with `ω_k` geometric from 1 to 10⁴.
pub fn timestamp_embed<S: Scalar>(t: f64, dim: usize) -> Result<DenseTensor<S>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Contract(format!("timestamp embedding dim must be even, got {dim}")));
    }
    let pairs = dim / 2;
    let mut data = vec![S::zero(); dim];
    for k in 0..pairs {
        let omega = if pairs == 1 {
            1.0
        } else {
            10f64.powf(4.0 * k as f64 / (pairs as f64 - 1.0))
        };
        let phase = t / omega;
        data[2 * k] = S::from_f64(phase.sin());
        data[2 * k + 1] = S::from_f64(phase.cos());
    }
    DenseTensor::from_vec(vec![1, dim], data)
}

/// Project a stream's tokens on the tape: `tokens · W + b`.
fn project_stream<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    stream: &TokenStream<S>,
    name_w: &str,
    name_b: &str,
) -> Result<Var> {
    let w = g.param(store, name_w)?;
    let b = g.param(store, name_b)?;
    let x = g.constant(stream.tokens.clone());
    let proj = g.matmul(x, w)?;
    g.add_bias(proj, b)
}

/// Build the frame condition on the tape: project sync tokens to `hidden_dim`,
/// then resample to the 31.25 fps latent rate. Returns `[T_a × hidden_dim]`.
pub fn build_frame_condition<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    sync: &TokenStream<S>,
) -> Result<Var> {
    if sync.kind != StreamKind::Sync {
        return Err(Error::Contract(format!(
            "build_frame_condition needs a sync stream, got {}",
            sync.kind.name()
        )));
    }
    let projected = project_stream(g, store, sync, names::SYNC_W, names::SYNC_B)?;
    g.resample_rows(projected, sync.rate_fps, LATENT_FPS)
}

/// Build the global condition on the tape: project and mean-pool visual and
/// text tokens, concatenate, and add the learned timestamp-embedding map.
/// Returns `[1 × 2·hidden_dim]`.
pub fn build_global_condition<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    cfg: &ConditioningConfig,
    visual: &TokenStream<S>,
    text: &TokenStream<S>,
    t_start_s: f64,
) -> Result<Var> {
    if visual.kind != StreamKind::Visual {
        return Err(Error::Contract(format!(
            "build_global_condition needs a visual stream, got {}",
            visual.kind.name()
        )));
    }
    if text.kind != StreamKind::Text {
        return Err(Error::Contract(format!(
            "build_global_condition needs a text stream, got {}",
            text.kind.name()
        )));
    }
    let pv = project_stream(g, store, visual, names::VISUAL_W, names::VISUAL_B)?;
    let pv = g.mean_rows(pv)?;
    let pt = project_stream(g, store, text, names::TEXT_W, names::TEXT_B)?;
    let pt = g.mean_rows(pt)?;
    let con = g.concat(1, &[pv, pt])?;

    let emb = g.constant(timestamp_embed::<S>(t_start_s, cfg.timestamp_dim)?);
    let ts_w = g.param(store, names::TS_W)?;
    let ts_b = g.param(store, names::TS_B)?;
    let fused = g.matmul(emb, ts_w)?;
    let fused = g.add_bias(fused, ts_b)?;
    g.add(con, fused)
}

/// Convenience wrapper: materialize the frame condition off the tape.
pub fn frame_condition<S: Scalar>(
    store: &ParameterStore<S>,
    sync: &TokenStream<S>,
) -> Result<FrameCondition<S>> {
    let mut g = Graph::new();
    let var = build_frame_condition(&mut g, store, sync)?;
    Ok(FrameCondition { tokens: g.value(var).clone() })
}

/// Convenience wrapper: materialize the global condition off the tape.
pub fn global_condition<S: Scalar>(
    store: &ParameterStore<S>,
    cfg: &ConditioningConfig,
    visual: &TokenStream<S>,
    text: &TokenStream<S>,
    t_start_s: f64,
) -> Result<GlobalCondition<S>> {
    let mut g = Graph::new();
    let var = build_global_condition(&mut g, store, cfg, visual, text, t_start_s)?;
    let flat = g.value(var).reshaped(vec![g.value(var).numel()])?;
    Ok(GlobalCondition { vector: flat })
}
