//! Feature token streams, rate conversion, and clip assembly.
//!
//! Four stream kinds flow through the pipeline: visual tokens at 8 fps, a
//! positionless 77-token text stream, synchronization tokens at 24 fps, and
//! audio latents at 31.25 fps. Kind-specific dimension/rate invariants are
//! enforced at ingestion (see `manifest`); derived streams (projected,
//! resampled) may carry any rate and dimension.

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Scalar};

/// Native visual feature rate (frames/second).
pub const VISUAL_FPS: f64 = 8.0;
/// Native synchronization feature rate.
pub const SYNC_FPS: f64 = 24.0;
/// Audio latent rate.
pub const LATENT_FPS: f64 = 31.25;
/// Fixed token count of the positionless text stream.
pub const TEXT_TOKENS: usize = 77;

/// Stream kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Visual,
    Text,
    Sync,
    AudioLatent,
}

impl StreamKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Visual => "visual",
            StreamKind::Text => "text",
            StreamKind::Sync => "sync",
            StreamKind::AudioLatent => "audio_latent",
        }
    }

    /// Native rate; 0 for the positionless text stream.
    pub fn native_fps(self) -> f64 {
        match self {
            StreamKind::Visual => VISUAL_FPS,
            StreamKind::Text => 0.0,
            StreamKind::Sync => SYNC_FPS,
            StreamKind::AudioLatent => LATENT_FPS,
        }
    }
}

/// Feature dimensions per kind. Defaults are the full-scale values; manifests
/// may shrink them with a `toy_dims` block, and invariants then check against
/// the override — never silently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamDims {
    pub visual: usize,
    pub text: usize,
    pub sync: usize,
    pub audio_latent: usize,
}

impl Default for StreamDims {
    fn default() -> Self {
        StreamDims { visual: 1024, text: 1024, sync: 768, audio_latent: 20 }
    }
}

impl StreamDims {
    pub fn dim_for(&self, kind: StreamKind) -> usize {
        match kind {
            StreamKind::Visual => self.visual,
            StreamKind::Text => self.text,
            StreamKind::Sync => self.sync,
            StreamKind::AudioLatent => self.audio_latent,
        }
    }
}

/// A `[T × dim]` token sequence with a frame rate (0 = positionless).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream<S> {
    pub kind: StreamKind,
    pub rate_fps: f64,
    pub tokens: DenseTensor<S>,
}

impl<S: Scalar> TokenStream<S> {
    /// Wrap a `[T × dim]` tensor. Kind invariants are not checked here; use
    /// [`TokenStream::check_native`] at ingestion boundaries.
    pub fn new(kind: StreamKind, rate_fps: f64, tokens: DenseTensor<S>) -> Result<Self> {
        if tokens.rank() != 2 {
            return Err(Error::Shape(format!(
                "token stream needs a [T×dim] tensor, got {:?}",
                tokens.shape()
            )));
        }
        if rate_fps < 0.0 || !rate_fps.is_finite() {
            return Err(Error::Contract(format!("invalid stream rate {rate_fps}")));
        }
        Ok(TokenStream { kind, rate_fps, tokens })
    }

    /// A stream at the kind's native rate.
    pub fn native(kind: StreamKind, tokens: DenseTensor<S>) -> Result<Self> {
        Self::new(kind, kind.native_fps(), tokens)
    }

    /// Token count.
    pub fn len(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees T >= 1
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.tokens.shape()[1]
    }

    /// Duration implied by the frame count; `None` for positionless streams.
    pub fn duration_s(&self) -> Option<f64> {
        (self.rate_fps > 0.0).then(|| self.len() as f64 / self.rate_fps)
    }

    /// Violations of the native-stream invariants for this kind, checked
    /// against `dims` (full-scale or toy overrides) and, when a duration is
    /// given, the frame-count tolerance `|T − round(rate·duration)| ≤ 1`.
    pub fn check_native(&self, dims: &StreamDims, duration_s: Option<f64>) -> Vec<String> {
        let mut violations = Vec::new();
        let want_dim = dims.dim_for(self.kind);
        if self.dim() != want_dim {
            violations.push(format!("{} dim {} != {}", self.kind.name(), self.dim(), want_dim));
        }
        let want_fps = self.kind.native_fps();
        if self.rate_fps != want_fps {
            violations.push(format!(
                "{} rate {} != {}",
                self.kind.name(),
                self.rate_fps,
                want_fps
            ));
        }
        if self.kind == StreamKind::Text {
            if self.len() != TEXT_TOKENS {
                violations.push(format!("text token count {} != {TEXT_TOKENS}", self.len()));
            }
        } else if let Some(dur) = duration_s {
            let expect = (self.kind.native_fps() * dur).round();
            if (self.len() as f64 - expect).abs() > 1.0 {
                violations.push(format!(
                    "{} length {} vs round({} · {dur}) = {expect} (tolerance ±1)",
                    self.kind.name(),
                    self.len(),
                    self.kind.native_fps()
                ));
            }
        }
        if !self.tokens.all_finite() {
            violations.push(format!("{} stream has non-finite entries", self.kind.name()));
        }
        violations
    }
}

/// Output length of a rate change: `round(target_fps · T / source_fps)`.
pub fn resampled_len(len: usize, source_fps: f64, target_fps: f64) -> usize {
    (target_fps * len as f64 / source_fps).round() as usize
}

/// One output row of a resampling plan: blend `(1−frac)·row[j0] + frac·row[j1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleTap {
    pub j0: usize,
    pub j1: usize,
    pub frac: f64,
}

/// Interpolation plan for a rate change on the half-sample-centered axis.
///
/// Sample `i` of a stream at rate `f` sits at time `(i + 0.5) / f`. Each
/// output position maps to a fractional source index, clamped to the sample
/// range. Both the plain resampler and the gradient-tape op consume this plan,
/// so forward values agree bitwise.
pub fn resample_plan(t_in: usize, source_fps: f64, target_fps: f64) -> Result<Vec<ResampleTap>> {
    if source_fps <= 0.0 {
        return Err(Error::Contract(format!(
            "cannot resample a positionless stream (rate {source_fps})"
        )));
    }
    if target_fps <= 0.0 || !target_fps.is_finite() {
        return Err(Error::Contract(format!("invalid resample target {target_fps}")));
    }
    let t_out = resampled_len(t_in, source_fps, target_fps);
    if t_out == 0 {
        return Err(Error::Contract(format!(
            "resampling {t_in} frames from {source_fps} to {target_fps} fps yields an empty stream"
        )));
    }
    let mut taps = Vec::with_capacity(t_out);
    for i in 0..t_out {
        let t = (i as f64 + 0.5) / target_fps;
        let u = (t * source_fps - 0.5).clamp(0.0, (t_in - 1) as f64);
        let j0 = u.floor() as usize;
        let j1 = (j0 + 1).min(t_in - 1);
        taps.push(ResampleTap { j0, j1, frac: u - j0 as f64 });
    }
    Ok(taps)
}

/// Apply a resampling plan to raw row-major data; interpolation runs in f64.
pub fn apply_resample_plan<S: Scalar>(
    taps: &[ResampleTap],
    data: &[S],
    dim: usize,
) -> Vec<S> {
    let mut out = vec![S::zero(); taps.len() * dim];
    for (i, tap) in taps.iter().enumerate() {
        let row0 = &data[tap.j0 * dim..(tap.j0 + 1) * dim];
        let row1 = &data[tap.j1 * dim..(tap.j1 + 1) * dim];
        for c in 0..dim {
            let v = (1.0 - tap.frac) * row0[c].as_f64() + tap.frac * row1[c].as_f64();
            out[i * dim + c] = S::from_f64(v);
        }
    }
    out
}

/// Linear resampling on a shared half-sample-centered time axis with endpoint
/// clamping. See [`resample_plan`] for the time mapping.
pub fn resample_stream<S: Scalar>(s: &TokenStream<S>, target_fps: f64) -> Result<TokenStream<S>> {
    if s.rate_fps <= 0.0 {
        return Err(Error::Contract(format!(
            "cannot resample positionless stream {}",
            s.kind.name()
        )));
    }
    let taps = resample_plan(s.len(), s.rate_fps, target_fps)?;
    let dim = s.dim();
    let out = apply_resample_plan(&taps, s.tokens.data(), dim);
    TokenStream::new(s.kind, target_fps, DenseTensor::from_vec(vec![taps.len(), dim], out)?)
}

/// Audio latents at 31.25 fps with an explicit intended duration.
///
/// The duration is carried separately from the frame count because clip
/// boundaries are defined in seconds; the frame count must stay within one
/// frame of `round(31.25 · duration_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence<S> {
    pub latents: DenseTensor<S>,
    pub duration_s: f64,
}

impl<S: Scalar> LatentSequence<S> {
    pub const FPS: f64 = LATENT_FPS;

    /// Wrap latents, deriving the duration from the frame count.
    pub fn new(latents: DenseTensor<S>) -> Result<Self> {
        if latents.rank() != 2 {
            return Err(Error::Shape(format!(
                "latent sequence needs [T×dim], got {:?}",
                latents.shape()
            )));
        }
        let duration_s = latents.shape()[0] as f64 / Self::FPS;
        Ok(LatentSequence { latents, duration_s })
    }

    /// Wrap latents with an intended duration; the frame count must be within
    /// one frame of `round(31.25 · duration_s)`.
    pub fn with_duration(latents: DenseTensor<S>, duration_s: f64) -> Result<Self> {
        if latents.rank() != 2 {
            return Err(Error::Shape(format!(
                "latent sequence needs [T×dim], got {:?}",
                latents.shape()
            )));
        }
        let expect = (Self::FPS * duration_s).round();
        let t = latents.shape()[0] as f64;
        if (t - expect).abs() > 1.0 {
            return Err(Error::Contract(format!(
                "latent frame count {t} inconsistent with duration {duration_s} s (expected ≈ {expect})"
            )));
        }
        Ok(LatentSequence { latents, duration_s })
    }

    pub fn len(&self) -> usize {
        self.latents.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.latents.shape()[1]
    }
}

/// Splice times in seconds, strictly increasing, excluding 0 and the total end.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplicePoints {
    pub times_s: Vec<f64>,
}

/// Concatenate clips in order; splice points sit at cumulative durations.
pub fn concat_clips<S: Scalar>(
    clips: &[LatentSequence<S>],
) -> Result<(LatentSequence<S>, SplicePoints)> {
    if clips.is_empty() {
        return Err(Error::Contract("concat_clips needs at least one clip".into()));
    }
    let dim = clips[0].dim();
    for c in clips {
        if c.dim() != dim {
            return Err(Error::Shape(format!(
                "clip latent dim {} != {dim} in concat_clips",
                c.dim()
            )));
        }
    }
    let total_frames: usize = clips.iter().map(|c| c.len()).sum();
    let mut data = Vec::with_capacity(total_frames * dim);
    for c in clips {
        data.extend_from_slice(c.latents.data());
    }
    let total_duration: f64 = clips.iter().map(|c| c.duration_s).sum();
    let mut times_s = Vec::with_capacity(clips.len().saturating_sub(1));
    let mut acc = 0.0;
    for c in &clips[..clips.len() - 1] {
        acc += c.duration_s;
        times_s.push(acc);
    }
    let latents = DenseTensor::from_vec(vec![total_frames, dim], data)?;
    Ok((
        LatentSequence { latents, duration_s: total_duration },
        SplicePoints { times_s },
    ))
}
