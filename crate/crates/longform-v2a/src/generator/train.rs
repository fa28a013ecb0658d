//! Gradient training of the flow-matching objective.
//!
//! Plain SGD with momentum and global grad-norm clipping; no external
//! optimizer. Two regimes: `finetune_all` updates everything, `adapters_only`
//! freezes the base model (its tensors stay bitwise identical) and trains the
//! `adapter.*` parameters through the fused condition path.

use crate::adapters::{GlobalFeatureBundle, ADAPTER_PREFIX};
use crate::conditioning::{build_frame_condition, build_global_condition, ConditioningConfig};
use crate::error::{Error, Result};
use crate::generator::{cfm_loss_with_draw, ClipStreams, DiTConfig};
use crate::rng::DetRng;
use crate::tensor::graph::{Graph, Var};
use crate::tensor::store::ParameterStore;
use crate::tensor::{DenseTensor, Scalar};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

/// Which parameters a training run may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    FinetuneAll,
    AdaptersOnly,
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub mode: TrainMode,
    /// Route conditions through the adapter fusion (requires bundles).
    pub fuse_adapters: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            lr: 1e-3,
            momentum: 0.9,
            grad_clip: 1.0,
            mode: TrainMode::FinetuneAll,
            fuse_adapters: false,
            seed: 0,
        }
    }
}

/// One training-log line; serialized as JSON-lines by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

/// One supervised clip: feature streams plus the target latents for its
/// absolute window (rows follow the window's frame-count law).
#[derive(Debug, Clone)]
pub struct TrainClip<S> {
    pub streams: ClipStreams<S>,
    pub target: DenseTensor<S>,
}

/// One parent video worth of training clips.
#[derive(Debug, Clone)]
pub struct TrainVideo<S> {
    pub bundle: Option<GlobalFeatureBundle<S>>,
    pub clips: Vec<TrainClip<S>>,
}

/// Build the (optionally fused) conditions for one clip and its flow loss at
/// a fixed draw. Shared by the optimizer step and fixed-batch evaluation.
fn clip_loss<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    dit_cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    video: &TrainVideo<S>,
    clip_idx: usize,
    fuse: bool,
    t: f64,
    eps: &DenseTensor<S>,
) -> Result<Var> {
    let clip = &video.clips[clip_idx];
    let t_a = clip.target.shape()[0];
    let cf = build_frame_condition(g, store, &clip.streams.sync)?;
    let cf = g.align_rows(cf, t_a, 1)?;
    let t_start = if cond_cfg.absolute_time { clip.streams.start_s } else { 0.0 };
    let cg = build_global_condition(
        g,
        store,
        cond_cfg,
        &clip.streams.visual,
        &clip.streams.text,
        t_start,
    )?;
    let (cg, cf) = if fuse {
        let bundle = video.bundle.as_ref().ok_or_else(|| {
            Error::Contract("adapter fusion requested but the video has no global bundle".into())
        })?;
        let cg = crate::adapters::fuse_global(g, store, cg, bundle, crate::adapters::GLOBAL_ADAPTER)?;
        let cf = crate::adapters::fuse_frame(
            g,
            store,
            cf,
            bundle,
            crate::adapters::SYN_ADAPTER,
            (clip.streams.start_s, clip.streams.end_s),
        )?;
        (cg, cf)
    } else {
        (cg, cf)
    };
    let (loss, _pred) = cfm_loss_with_draw(g, store, dit_cfg, &clip.target, cg, cf, t, eps)?;
    Ok(loss)
}

/// A frozen (clip, t, ε) evaluation point.
#[derive(Debug, Clone)]
pub struct EvalItem<S> {
    pub video_idx: usize,
    pub clip_idx: usize,
    pub t: f64,
    pub eps: DenseTensor<S>,
}

/// Draw a reusable evaluation batch over the dataset.
pub fn make_eval_batch<S: Scalar>(
    dataset: &[TrainVideo<S>],
    n: usize,
    seed: u64,
) -> Result<Vec<EvalItem<S>>> {
    if dataset.is_empty() || dataset.iter().any(|v| v.clips.is_empty()) {
        return Err(Error::Contract("evaluation needs a non-empty dataset".into()));
    }
    let mut rng = DetRng::new(seed, "eval-batch");
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let video_idx = rng.below(dataset.len() as u64) as usize;
        let clip_idx = rng.below(dataset[video_idx].clips.len() as u64) as usize;
        let t = rng.uniform();
        let shape = dataset[video_idx].clips[clip_idx].target.shape().to_vec();
        let mut eps = DenseTensor::<S>::zeros(&shape);
        for v in eps.data_mut() {
            *v = S::from_f64(rng.normal());
        }
        items.push(EvalItem { video_idx, clip_idx, t, eps });
    }
    Ok(items)
}

/// Mean flow-matching loss of the frozen batch under the current parameters.
pub fn eval_fixed_batch<S: Scalar>(
    store: &ParameterStore<S>,
    dit_cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    dataset: &[TrainVideo<S>],
    fuse: bool,
    items: &[EvalItem<S>],
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Contract("evaluation batch is empty".into()));
    }
    let mut acc = 0.0;
    for item in items {
        let mut g = Graph::new();
        let loss = clip_loss(
            &mut g,
            store,
            dit_cfg,
            cond_cfg,
            &dataset[item.video_idx],
            item.clip_idx,
            fuse,
            item.t,
            &item.eps,
        )?;
        acc += g.value(loss).item().as_f64();
    }
    Ok(acc / items.len() as f64)
}

/// Run `cfg.steps` optimizer steps over the dataset (round-robin clips).
///
/// Returns the per-step log. Parameter trainability is set according to
/// `cfg.mode` and left in place afterwards.
pub fn train<S: Scalar>(
    store: &mut ParameterStore<S>,
    dataset: &[TrainVideo<S>],
    dit_cfg: &DiTConfig,
    cond_cfg: &ConditioningConfig,
    cfg: &TrainConfig,
) -> Result<Vec<TrainLogEntry>> {
    if dataset.is_empty() || dataset.iter().all(|v| v.clips.is_empty()) {
        return Err(Error::Contract("training needs a non-empty dataset".into()));
    }
    match cfg.mode {
        TrainMode::AdaptersOnly => {
            if store.elements_with_prefix(ADAPTER_PREFIX) == 0 {
                return Err(Error::Contract(
                    "adapters_only training but the store has no adapter parameters".into(),
                ));
            }
            store.set_trainable_prefix("", false);
            store.set_trainable_prefix(ADAPTER_PREFIX, true);
        }
        TrainMode::FinetuneAll => store.set_trainable_prefix("", true),
    }
    if cfg.fuse_adapters && dataset.iter().any(|v| v.bundle.is_none()) {
        return Err(Error::Contract(
            "fuse_adapters training needs a global bundle on every video".into(),
        ));
    }

    let flat: Vec<(usize, usize)> = dataset
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| (0..v.clips.len()).map(move |ci| (vi, ci)))
        .collect();

    let base_rng = DetRng::new(cfg.seed, "train");
    let mut velocity: BTreeMap<String, Vec<S>> = BTreeMap::new();
    let mut log = Vec::with_capacity(cfg.steps);
    let started = Instant::now();

    for step in 0..cfg.steps {
        let (vi, ci) = flat[step % flat.len()];
        let mut rng = base_rng.derive(&format!("step.{step}"));
        let t = rng.uniform();
        let shape = dataset[vi].clips[ci].target.shape().to_vec();
        let mut eps = DenseTensor::<S>::zeros(&shape);
        for v in eps.data_mut() {
            *v = S::from_f64(rng.normal());
        }

        let mut g = Graph::new();
        let loss = clip_loss(
            &mut g,
            store,
            dit_cfg,
            cond_cfg,
            &dataset[vi],
            ci,
            cfg.fuse_adapters,
            t,
            &eps,
        )?;
        let loss_val = g.value(loss).item().as_f64();
        if !loss_val.is_finite() {
            let recent: Vec<f64> = log.iter().rev().take(5).map(|e: &TrainLogEntry| e.loss).collect();
            return Err(Error::Numeric(format!(
                "non-finite loss {loss_val} at step {step} (video {vi}, clip {ci}); \
                 recent losses: {recent:?}"
            )));
        }

        store.zero_grads();
        g.backward(loss, store)?;

        let norm = store.trainable_grad_norm();
        let scale = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            cfg.grad_clip / norm
        } else {
            1.0
        };
        let (lr, mu, sc) =
            (S::from_f64(cfg.lr), S::from_f64(cfg.momentum), S::from_f64(scale));
        store.for_each_param_mut(|name, value, grad| {
            if !value.requires_grad() {
                return;
            }
            let vel = velocity
                .entry(name.to_string())
                .or_insert_with(|| vec![S::zero(); grad.numel()]);
            for (i, p) in value.data_mut().iter_mut().enumerate() {
                vel[i] = mu * vel[i] + sc * grad.data()[i];
                *p -= lr * vel[i];
            }
        });

        log.push(TrainLogEntry {
            step,
            loss: loss_val,
            lr: cfg.lr,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
    Ok(log)
}
