//! Dual lightweight adapters: additive corrections to the clip-level
//! conditions from full-video (multi-clip) features.
//!
//! `h_global` corrects the global condition from pooled full-video visual
//! features; `h_syn` corrects the frame condition from the clip's window of
//! the full-video sync stream. Both are bottleneck MLPs whose output
//! projection can start at exact zero, so a freshly initialized adapter is an
//! additive no-op and the per-clip baseline is recovered bitwise. That
//! identity is the load-bearing invariant of the artifact: fine-tuning starts
//! from the base model, not near it.

use crate::conditioning::{names as cond_names, scaled_normal};
use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::stream::{StreamKind, TokenStream, LATENT_FPS};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::store::ParameterStore;
use crate::tensor::{DenseTensor, Scalar};
use serde::{Deserialize, Serialize};

/// Initialization mode for the adapter's output projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterInit {
    /// Output projection all zeros ⇒ the adapter is an exact no-op.
    ZeroOut,
    /// Both projections drawn from scaled normals.
    Random,
}

/// Shape and initialization of one bottleneck adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub input_dim: usize,
    pub bottleneck_dim: usize,
    pub output_dim: usize,
    pub init: AdapterInit,
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.bottleneck_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("adapter dims must be positive".into()));
        }
        if self.bottleneck_dim >= self.input_dim {
            return Err(Error::Config(format!(
                "adapter bottleneck_dim {} must be < input_dim {}",
                self.bottleneck_dim, self.input_dim
            )));
        }
        Ok(())
    }
}

/// Full-video feature streams consumed by the adapters.
#[derive(Debug, Clone)]
pub struct GlobalFeatureBundle<S> {
    pub visual: TokenStream<S>,
    /// Extracted and validated alongside the others; no fusion path consumes
    /// it — kept so ingestion sees the full feature set.
    pub text: TokenStream<S>,
    pub sync: TokenStream<S>,
}

impl<S: Scalar> GlobalFeatureBundle<S> {
    pub fn new(
        visual: TokenStream<S>,
        text: TokenStream<S>,
        sync: TokenStream<S>,
    ) -> Result<Self> {
        for (stream, want) in [
            (&visual, StreamKind::Visual),
            (&text, StreamKind::Text),
            (&sync, StreamKind::Sync),
        ] {
            if stream.kind != want {
                return Err(Error::Contract(format!(
                    "global bundle slot for {} got {}",
                    want.name(),
                    stream.kind.name()
                )));
            }
        }
        let dv = visual.duration_s().ok_or_else(|| {
            Error::Contract("global visual stream has no rate".into())
        })?;
        let ds = sync.duration_s().ok_or_else(|| {
            Error::Contract("global sync stream has no rate".into())
        })?;
        // One frame of the coarser (visual) stream is the alignment budget.
        let tol = 1.0 / visual.rate_fps + 1e-9;
        if (dv - ds).abs() > tol {
            return Err(Error::Contract(format!(
                "global visual ({dv:.4} s) and sync ({ds:.4} s) durations differ by more than one visual frame"
            )));
        }
        Ok(GlobalFeatureBundle { visual, text, sync })
    }

    pub fn duration_s(&self) -> f64 {
        self.visual.duration_s().expect("validated at construction")
    }
}

/// Canonical prefix of the global-condition adapter `h_global`.
pub const GLOBAL_ADAPTER: &str = "adapter.global";
/// Canonical prefix of the frame-condition adapter `h_syn`.
pub const SYN_ADAPTER: &str = "adapter.syn";
/// Prefix shared by every adapter tensor; used to freeze/count them.
pub const ADAPTER_PREFIX: &str = "adapter.";

/// Parameter name for one adapter tensor, e.g. `adapter.global.down.w`.
fn pname(prefix: &str, part: &str) -> String {
    format!("{prefix}.{part}")
}

/// Register `{prefix}.down.{w,b}` and `{prefix}.up.{w,b}` in `store`.
pub fn init_adapter_params<S: Scalar>(
    store: &mut ParameterStore<S>,
    prefix: &str,
    cfg: &AdapterConfig,
    rng: &mut DetRng,
) -> Result<()> {
    cfg.validate()?;
    let mut down_rng = rng.derive(&pname(prefix, "down"));
    store.insert(
        &pname(prefix, "down.w"),
        scaled_normal(&mut down_rng, cfg.input_dim, cfg.bottleneck_dim),
    )?;
    store.insert(&pname(prefix, "down.b"), DenseTensor::zeros(&[cfg.bottleneck_dim]))?;
    let up = match cfg.init {
        AdapterInit::ZeroOut => DenseTensor::zeros(&[cfg.bottleneck_dim, cfg.output_dim]),
        AdapterInit::Random => {
            scaled_normal(&mut rng.derive(&pname(prefix, "up")), cfg.bottleneck_dim, cfg.output_dim)
        }
    };
    store.insert(&pname(prefix, "up.w"), up)?;
    store.insert(&pname(prefix, "up.b"), DenseTensor::zeros(&[cfg.output_dim]))?;
    Ok(())
}

/// Bottleneck forward on the tape: `gelu(x·W_d + b_d)·W_u + b_u`.
pub fn adapter_forward<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let dw = g.param(store, &pname(prefix, "down.w"))?;
    let db = g.param(store, &pname(prefix, "down.b"))?;
    let uw = g.param(store, &pname(prefix, "up.w"))?;
    let ub = g.param(store, &pname(prefix, "up.b"))?;
    let h = g.matmul(x, dw)?;
    let h = g.add_bias(h, db)?;
    let h = g.gelu(h);
    let y = g.matmul(h, uw)?;
    g.add_bias(y, ub)
}

/// `c_g^final = c_g + h_global(mean_pool(project(F_v_global)))`.
///
/// The projection reuses the conditioning module's visual weights, so the
/// global features live in the same space as the clip-level ones.
pub fn fuse_global<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    c_g: Var,
    bundle: &GlobalFeatureBundle<S>,
    adapter_prefix: &str,
) -> Result<Var> {
    let w = g.param(store, cond_names::VISUAL_W)?;
    let b = g.param(store, cond_names::VISUAL_B)?;
    let x = g.constant(bundle.visual.tokens.clone());
    let proj = g.matmul(x, w)?;
    let proj = g.add_bias(proj, b)?;
    let pooled = g.mean_rows(proj)?;
    let corr = adapter_forward(g, store, adapter_prefix, pooled)?;
    g.add(c_g, corr)
}

/// Latent-rate frame window for a clip: `[round(start·31.25), round(end·31.25))`.
pub fn latent_window(start_s: f64, end_s: f64) -> (usize, usize) {
    (
        (start_s * LATENT_FPS).round() as usize,
        (end_s * LATENT_FPS).round() as usize,
    )
}

/// `c_f^final = c_f + h_syn(window(resample(project(F_syn_global))))`.
///
/// The global sync stream is projected with the conditioning weights,
/// resampled once to the latent rate, and sliced at the clip's absolute
/// window. The per-clip condition and the window can disagree by one frame
/// (each applies the rounding law to different endpoints), so the correction
/// is trimmed or edge-padded to the length of `c_f`; a larger gap is a
/// contract violation.
pub fn fuse_frame<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    c_f: Var,
    bundle: &GlobalFeatureBundle<S>,
    adapter_prefix: &str,
    window_s: (f64, f64),
) -> Result<Var> {
    let (start_s, end_s) = window_s;
    let duration = bundle.duration_s();
    if !(start_s >= -1e-9 && end_s > start_s && end_s <= duration + 1e-9) {
        return Err(Error::Contract(format!(
            "clip window [{start_s}, {end_s}] outside video of {duration} s"
        )));
    }
    let w = g.param(store, cond_names::SYNC_W)?;
    let b = g.param(store, cond_names::SYNC_B)?;
    let x = g.constant(bundle.sync.tokens.clone());
    let proj = g.matmul(x, w)?;
    let proj = g.add_bias(proj, b)?;
    let at_latent = g.resample_rows(proj, bundle.sync.rate_fps, LATENT_FPS)?;

    let total = g.value(at_latent).shape()[0];
    let (lo, hi) = latent_window(start_s, end_s);
    let hi = hi.min(total);
    if lo >= hi {
        return Err(Error::Contract(format!(
            "clip window [{start_s}, {end_s}] maps to empty latent range [{lo}, {hi})"
        )));
    }
    let windowed = g.narrow(at_latent, 0, lo, hi - lo)?;
    let corr = adapter_forward(g, store, adapter_prefix, windowed)?;

    // ±1 alignment between the window law and the per-clip frame-count law.
    let want = g.value(c_f).shape()[0];
    let corr = g.align_rows(corr, want, 1)?;
    g.add(c_f, corr)
}

/// Adapter parameter count over base parameter count.
pub fn param_budget<S: Scalar>(
    base: &ParameterStore<S>,
    adapters: &ParameterStore<S>,
) -> Result<f64> {
    budget_ratio(adapters.total_elements(), base.total_elements())
}

/// Ratio of raw parameter counts; exposed for budget math on reported sizes.
pub fn budget_ratio(adapter_params: usize, base_params: usize) -> Result<f64> {
    if base_params == 0 {
        return Err(Error::Contract("param budget needs a non-empty base model".into()));
    }
    Ok(adapter_params as f64 / base_params as f64)
}
