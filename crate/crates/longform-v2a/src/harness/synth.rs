//! Deterministic synthetic dataset with a factored causal structure.
//!
//! Every video carries one hidden amplitude envelope and one hidden DC offset;
//! both modulate the target latents across the whole video but are observable
//! only in the *global* streams. Per-clip streams expose the local event
//! envelope and nothing else:
//!
//! - target rows: `(1 + A(t) + e(t)) · 0.5·u + μ · 0.3·w + 0.01·ξ`
//!   with `A(t) = a·sin(2πf·t + φ)` the per-video envelope, `e(t)` a sum of
//!   per-clip Gaussian event bumps, `u, w` fixed unit directions, `ξ` noise.
//! - clip sync, channel 0: `e(t)` — local events, visible to the baseline.
//! - global sync, channel 0: `e(t)`; channel 1: `A(t)` — the envelope exists
//!   nowhere else.
//! - global visual, channel 0: `μ` — the DC offset exists nowhere else.
//!
//! A per-clip model therefore cannot predict the envelope or DC terms, while
//! the adapter path sees exactly the missing factors. Targets stay continuous
//! across clip boundaries by construction, which `synth_dataset` re-checks.

use crate::adapters::GlobalFeatureBundle;
use crate::error::{Error, Result};
use crate::generator::train::{TrainClip, TrainVideo};
use crate::generator::ClipStreams;
use crate::harness::config::{DatasetConfig, ExperimentConfig};
use crate::ldt;
use crate::manifest::{validate_manifest, ClipManifest, StreamPaths, ToyDims};
use crate::rng::DetRng;
use crate::stream::{LatentSequence, StreamKind, LATENT_FPS, SYNC_FPS, TEXT_TOKENS, VISUAL_FPS};
use crate::tensor::{DenseTensor, Scalar};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Carrier scale on the amplitude direction `u`.
const CARRIER: f64 = 0.5;
/// Scale on the DC direction `w`.
const DC_SCALE: f64 = 0.7;
/// Target observation noise.
const TARGET_NOISE: f64 = 0.01;
/// Noise on informative stream channels (averages out under pooling).
const SIGNAL_NOISE: f64 = 0.02;
/// Noise on uninformative stream channels.
const FILLER_NOISE: f64 = 0.1;

const ENVELOPE_AMP: (f64, f64) = (1.6, 2.4);
const ENVELOPE_HZ: (f64, f64) = (0.10, 0.22);
const DC_RANGE: (f64, f64) = (-1.0, 1.0);
const EVENT_AMP: (f64, f64) = (0.2, 0.5);
const EVENT_SIGMA_S: (f64, f64) = (0.05, 0.15);
/// Event centers keep this fraction of the clip away from its edges.
const EVENT_MARGIN: f64 = 0.15;

/// Top-level index written as `dataset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub videos: Vec<String>,
}

pub const INDEX_FILE: &str = "dataset.json";

/// One Gaussian amplitude bump.
#[derive(Debug, Clone, Copy)]
struct Event {
    center_s: f64,
    sigma_s: f64,
    amp: f64,
}

/// The hidden per-video factors.
#[derive(Debug, Clone)]
struct VideoFactors {
    amp: f64,
    freq_hz: f64,
    phase: f64,
    dc: f64,
    events: Vec<Event>,
}

impl VideoFactors {
    fn draw(rng: &DetRng, boundaries: &[f64]) -> VideoFactors {
        let mut p = rng.derive("params");
        let amp = p.uniform_in(ENVELOPE_AMP.0, ENVELOPE_AMP.1);
        let freq_hz = p.uniform_in(ENVELOPE_HZ.0, ENVELOPE_HZ.1);
        let phase = p.uniform_in(0.0, std::f64::consts::TAU);
        let dc = p.uniform_in(DC_RANGE.0, DC_RANGE.1);
        let mut events = Vec::new();
        for k in 0..boundaries.len() - 1 {
            let (lo, hi) = (boundaries[k], boundaries[k + 1]);
            let margin = EVENT_MARGIN * (hi - lo);
            let mut e = rng.derive(&format!("events.clip{k}"));
            let n = 1 + e.below(2) as usize;
            for _ in 0..n {
                events.push(Event {
                    center_s: e.uniform_in(lo + margin, hi - margin),
                    sigma_s: e.uniform_in(EVENT_SIGMA_S.0, EVENT_SIGMA_S.1),
                    amp: e.uniform_in(EVENT_AMP.0, EVENT_AMP.1),
                });
            }
        }
        VideoFactors { amp, freq_hz, phase, dc, events }
    }

    fn envelope(&self, t: f64) -> f64 {
        self.amp * (std::f64::consts::TAU * self.freq_hz * t + self.phase).sin()
    }

    fn event_env(&self, t: f64) -> f64 {
        self.events
            .iter()
            .map(|e| {
                let z = (t - e.center_s) / e.sigma_s;
                e.amp * (-0.5 * z * z).exp()
            })
            .sum()
    }
}

/// Unit directions in latent space, fixed per dataset.
struct Basis {
    u: Vec<f64>,
    w: Vec<f64>,
}

impl Basis {
    fn draw(seed: u64, dim: usize) -> Basis {
        let rng = DetRng::new(seed, "basis");
        Basis { u: unit_vec(&mut rng.derive("u"), dim), w: unit_vec(&mut rng.derive("w"), dim) }
    }
}

fn unit_vec(rng: &mut DetRng, dim: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; dim];
        rng.fill_normal(&mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Redraw on a (measure-zero) degenerate sample.
        if norm > 1e-6 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

/// Fill a `[rows × cols]` tensor from a per-cell closure.
fn tensor_from<S: Scalar>(
    rows: usize,
    cols: usize,
    mut f: impl FnMut(usize, usize) -> f64,
) -> DenseTensor<S> {
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(S::from_f64(f(r, c)));
        }
    }
    DenseTensor::from_vec(vec![rows, cols], data).expect("shape matches data")
}

fn frames(duration_s: f64, fps: f64) -> usize {
    (duration_s * fps).round() as usize
}

/// Full-video target latents on the 31.25 fps grid.
fn video_target<S: Scalar>(
    d: &DatasetConfig,
    basis: &Basis,
    fx: &VideoFactors,
    rng: &DetRng,
) -> DenseTensor<S> {
    let t_rows = frames(d.video_duration_s, LATENT_FPS);
    let mut noise = rng.derive("noise.target");
    tensor_from(t_rows, d.latent_dim, |r, c| {
        let t = r as f64 / LATENT_FPS;
        let gain = 1.0 + fx.envelope(t) + fx.event_env(t);
        gain * CARRIER * basis.u[c] + fx.dc * DC_SCALE * basis.w[c] + TARGET_NOISE * noise.normal()
    })
}

/// Largest per-channel frame-to-frame jump; the continuity guard.
fn max_jump<S: Scalar>(t: &DenseTensor<S>) -> f64 {
    let rows = t.shape()[0];
    let mut worst = 0.0f64;
    for r in 1..rows {
        for (a, b) in t.row(r - 1).iter().zip(t.row(r)) {
            worst = worst.max((b.as_f64() - a.as_f64()).abs());
        }
    }
    worst
}

fn toy_dims(d: &DatasetConfig) -> ToyDims {
    ToyDims {
        visual: Some(d.visual_dim),
        text: Some(d.text_dim),
        sync: Some(d.sync_dim),
        audio_latent: Some(d.latent_dim),
    }
}

fn all_streams() -> StreamPaths {
    let mut s = StreamPaths::default();
    s.set(StreamKind::Visual, "visual.ldt".into());
    s.set(StreamKind::Text, "text.ldt".into());
    s.set(StreamKind::Sync, "sync.ldt".into());
    s.set(StreamKind::AudioLatent, "target.ldt".into());
    s
}

fn write_video<S: Scalar>(
    cfg: &ExperimentConfig,
    basis: &Basis,
    video_idx: usize,
    video_id: &str,
    dir: &Path,
) -> Result<()> {
    let d = &cfg.dataset;
    let boundaries = d.clip_boundaries();
    let rng = DetRng::new(cfg.seed, &format!("video.{video_idx}"));
    let fx = VideoFactors::draw(&rng, &boundaries);

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let target = video_target::<S>(d, basis, &fx, &rng);
    let jump = max_jump(&target);
    if jump > d.continuity_limit {
        return Err(Error::Contract(format!(
            "synthetic target of {video_id} jumps {jump:.4} per frame, over the {} limit",
            d.continuity_limit
        )));
    }
    ldt::save(dir.join("target.ldt"), &target)?;

    // Global visual: channel 0 carries the DC offset, the rest is filler.
    let mut vis_noise = rng.derive("noise.visual");
    let visual = tensor_from::<S>(frames(d.video_duration_s, VISUAL_FPS), d.visual_dim, |_, c| {
        if c == 0 {
            fx.dc + SIGNAL_NOISE * vis_noise.normal()
        } else {
            FILLER_NOISE * vis_noise.normal()
        }
    });
    ldt::save(dir.join("visual.ldt"), &visual)?;

    // Text: one topic vector per video, shared verbatim by its clips.
    let mut topic_rng = rng.derive("topic");
    let topic: Vec<f64> = (0..d.text_dim).map(|_| 0.2 * topic_rng.normal()).collect();
    let mut text_noise = rng.derive("noise.text");
    let text = tensor_from::<S>(TEXT_TOKENS, d.text_dim, |_, c| {
        topic[c] + 0.05 * text_noise.normal()
    });
    ldt::save(dir.join("text.ldt"), &text)?;

    // Global sync: channel 0 events, channel 1 the envelope — the only place
    // A(t) is observable.
    let mut sync_noise = rng.derive("noise.sync");
    let sync = tensor_from::<S>(frames(d.video_duration_s, SYNC_FPS), d.sync_dim, |r, c| {
        let t = r as f64 / SYNC_FPS;
        match c {
            0 => fx.event_env(t) + SIGNAL_NOISE * sync_noise.normal(),
            1 => fx.envelope(t) + SIGNAL_NOISE * sync_noise.normal(),
            _ => FILLER_NOISE * sync_noise.normal(),
        }
    });
    ldt::save(dir.join("sync.ldt"), &sync)?;

    let parent = ClipManifest {
        clip_id: video_id.into(),
        parent_id: None,
        duration_s: d.video_duration_s,
        streams: all_streams(),
        splices: boundaries[1..boundaries.len() - 1].to_vec(),
        toy_dims: Some(toy_dims(d)),
    };
    parent.save(dir.join("manifest.json"))?;
    let report = validate_manifest(&parent, dir, None);
    if !report.is_valid() {
        return Err(Error::Contract(format!(
            "synthesized parent manifest of {video_id} is invalid: {}",
            report.violations.join("; ")
        )));
    }

    for k in 0..boundaries.len() - 1 {
        let (start_s, end_s) = (boundaries[k], boundaries[k + 1]);
        let clip_id = format!("{video_id}_c{k:02}");
        let clip_dir = dir.join("clips").join(format!("clip_{k:02}"));
        std::fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
        write_clip::<S>(d, &fx, &rng, k, &clip_id, start_s, end_s, &target, &text, &clip_dir)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_clip<S: Scalar>(
    d: &DatasetConfig,
    fx: &VideoFactors,
    rng: &DetRng,
    k: usize,
    clip_id: &str,
    start_s: f64,
    end_s: f64,
    target: &DenseTensor<S>,
    text: &DenseTensor<S>,
    dir: &Path,
) -> Result<()> {
    let duration = end_s - start_s;

    // Clip target: the absolute latent window of the full-video target.
    let lo = (start_s * LATENT_FPS).round() as usize;
    let hi = (end_s * LATENT_FPS).round() as usize;
    let dim = d.latent_dim;
    let mut rows = Vec::with_capacity((hi - lo) * dim);
    for r in lo..hi {
        rows.extend_from_slice(target.row(r));
    }
    let clip_target = DenseTensor::from_vec(vec![hi - lo, dim], rows)?;
    ldt::save(dir.join("target.ldt"), &clip_target)?;

    // Clip visual: per-clip content vector plus filler; no DC, no envelope.
    let mut content_rng = rng.derive(&format!("clip{k}.visual.content"));
    let content: Vec<f64> = (0..d.visual_dim).map(|_| 0.2 * content_rng.normal()).collect();
    let mut vis_noise = rng.derive(&format!("clip{k}.noise.visual"));
    let visual = tensor_from::<S>(frames(duration, VISUAL_FPS), d.visual_dim, |_, c| {
        content[c] + FILLER_NOISE * vis_noise.normal()
    });
    ldt::save(dir.join("visual.ldt"), &visual)?;

    ldt::save(dir.join("text.ldt"), text)?;

    // Clip sync: local events only; the envelope channel stays filler here.
    let mut sync_noise = rng.derive(&format!("clip{k}.noise.sync"));
    let sync = tensor_from::<S>(frames(duration, SYNC_FPS), d.sync_dim, |r, c| {
        let t = start_s + r as f64 / SYNC_FPS;
        match c {
            0 => fx.event_env(t) + SIGNAL_NOISE * sync_noise.normal(),
            _ => FILLER_NOISE * sync_noise.normal(),
        }
    });
    ldt::save(dir.join("sync.ldt"), &sync)?;

    let manifest = ClipManifest {
        clip_id: clip_id.into(),
        parent_id: Some(clip_id.rsplit_once("_c").expect("clip id has suffix").0.into()),
        duration_s: duration,
        streams: all_streams(),
        splices: Vec::new(),
        toy_dims: Some(toy_dims(d)),
    };
    manifest.save(dir.join("manifest.json"))?;
    let report = validate_manifest(&manifest, dir, Some(d.video_duration_s));
    if !report.is_valid() {
        return Err(Error::Contract(format!(
            "synthesized clip manifest {clip_id} is invalid: {}",
            report.violations.join("; ")
        )));
    }
    Ok(())
}

/// Write the whole dataset under `out`; same config and seed give
/// byte-identical directories.
pub fn synth_dataset<S: Scalar>(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetIndex> {
    cfg.validate()?;
    let d = cfg.dataset;
    let videos_dir = out.join("videos");
    std::fs::create_dir_all(&videos_dir).map_err(|e| Error::io(&videos_dir, e))?;
    let basis = Basis::draw(cfg.seed, d.latent_dim);
    let mut videos = Vec::with_capacity(d.n_videos);
    for v in d.video_offset..d.video_offset + d.n_videos {
        let video_id = format!("vid_{v:03}");
        write_video::<S>(cfg, &basis, v, &video_id, &videos_dir.join(&video_id))?;
        videos.push(video_id);
    }
    let index = DatasetIndex { seed: cfg.seed, dataset: d, videos };
    let path = out.join(INDEX_FILE);
    let mut text = serde_json::to_string_pretty(&index).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

/// One dataset video loaded back into memory.
#[derive(Debug, Clone)]
pub struct LoadedVideo<S> {
    pub video_id: String,
    pub duration_s: f64,
    pub splices: Vec<f64>,
    pub bundle: GlobalFeatureBundle<S>,
    pub clips: Vec<ClipStreams<S>>,
    pub clip_targets: Vec<DenseTensor<S>>,
    /// Ground-truth full-video latents.
    pub target: LatentSequence<S>,
}

impl<S: Scalar> LoadedVideo<S> {
    /// View as a training video (bundle attached, targets zipped per clip).
    pub fn train_video(&self) -> TrainVideo<S> {
        TrainVideo {
            bundle: Some(self.bundle.clone()),
            clips: self
                .clips
                .iter()
                .zip(&self.clip_targets)
                .map(|(c, t)| TrainClip { streams: c.clone(), target: t.clone() })
                .collect(),
        }
    }
}

/// Read `dataset.json` and every video back; strict stream validation.
pub fn load_dataset<S: Scalar>(dir: &Path) -> Result<(DatasetIndex, Vec<LoadedVideo<S>>)> {
    let index_path = dir.join(INDEX_FILE);
    if !index_path.is_file() {
        return Err(Error::Config(format!(
            "no dataset index at {}; run `lfv2a synth` first",
            index_path.display()
        )));
    }
    let bytes = std::fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: DatasetIndex =
        serde_json::from_slice(&bytes).map_err(|e| Error::json(&index_path, e))?;
    let mut videos = Vec::with_capacity(index.videos.len());
    for video_id in &index.videos {
        videos.push(load_video(dir.join("videos").join(video_id), video_id)?);
    }
    Ok((index, videos))
}

fn load_video<S: Scalar>(dir: std::path::PathBuf, video_id: &str) -> Result<LoadedVideo<S>> {
    let parent = ClipManifest::load(dir.join("manifest.json"))?;
    let visual = parent.load_stream::<S>(StreamKind::Visual, &dir)?;
    let text = parent.load_stream::<S>(StreamKind::Text, &dir)?;
    let sync = parent.load_stream::<S>(StreamKind::Sync, &dir)?;
    let gt = parent.load_stream::<S>(StreamKind::AudioLatent, &dir)?;
    let target = LatentSequence::with_duration(gt.tokens, parent.duration_s)?;
    let bundle = GlobalFeatureBundle::new(visual, text, sync)?;

    let mut boundaries = vec![0.0];
    boundaries.extend_from_slice(&parent.splices);
    boundaries.push(parent.duration_s);

    let clips_dir = dir.join("clips");
    let mut clip_dirs: Vec<std::path::PathBuf> = std::fs::read_dir(&clips_dir)
        .map_err(|e| Error::io(&clips_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    clip_dirs.sort();
    if clip_dirs.len() != boundaries.len() - 1 {
        return Err(Error::Contract(format!(
            "video {video_id} declares {} clip windows but has {} clip directories",
            boundaries.len() - 1,
            clip_dirs.len()
        )));
    }

    let mut clips = Vec::with_capacity(clip_dirs.len());
    let mut clip_targets = Vec::with_capacity(clip_dirs.len());
    for (k, clip_dir) in clip_dirs.iter().enumerate() {
        let (start_s, end_s) = (boundaries[k], boundaries[k + 1]);
        let m = ClipManifest::load(clip_dir.join("manifest.json"))?;
        if (m.duration_s - (end_s - start_s)).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "clip {} lasts {} s but its parent window is {} s",
                m.clip_id,
                m.duration_s,
                end_s - start_s
            )));
        }
        let target = m.load_stream::<S>(StreamKind::AudioLatent, clip_dir)?;
        clips.push(ClipStreams {
            clip_id: m.clip_id.clone(),
            start_s,
            end_s,
            visual: m.load_stream::<S>(StreamKind::Visual, clip_dir)?,
            text: m.load_stream::<S>(StreamKind::Text, clip_dir)?,
            sync: m.load_stream::<S>(StreamKind::Sync, clip_dir)?,
        });
        clip_targets.push(target.tokens);
    }

    Ok(LoadedVideo {
        video_id: video_id.into(),
        duration_s: parent.duration_s,
        splices: parent.splices,
        bundle,
        clips,
        clip_targets,
        target,
    })
}
