//! Splice-consistency metrics over audio (or latent-proxy) signals, plus the
//! report container shared by the evaluation commands.
//!
//! Short-time energy is the mean squared amplitude over a window. The
//! headline metric is the mean absolute energy change across the 10 ms
//! windows straddling each splice point; an injected discontinuity raises it,
//! a crossfade lowers it.

pub mod distribution;
pub mod ingest;
pub mod wav;

use crate::error::{Error, Result};
use crate::stream::{LatentSequence, SplicePoints, LATENT_FPS};
use crate::tensor::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Mono audio at a native sample rate; samples nominally in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::Contract(format!("sample rate must be positive, got {sample_rate}")));
        }
        if samples.is_empty() {
            return Err(Error::Contract("audio buffer must be non-empty".into()));
        }
        Ok(AudioBuffer { sample_rate, samples })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Latent-domain stand-in for a waveform: one "sample" per frame, valued at
/// the frame's L2 norm, at the 31.25 fps latent rate. A 10 ms window rounds
/// to below one frame and is clamped to a single frame — a proxy, not a
/// decode.
pub fn latent_energy_proxy<S: Scalar>(seq: &LatentSequence<S>) -> Result<AudioBuffer> {
    let t = seq.latents.shape()[0];
    let d = seq.latents.shape()[1];
    let mut samples = Vec::with_capacity(t);
    for r in 0..t {
        let mut acc = 0.0;
        for c in 0..d {
            let v = seq.latents.at2(r, c).as_f64();
            acc += v * v;
        }
        samples.push(acc.sqrt());
    }
    AudioBuffer::new(LATENT_FPS, samples)
}

/// Sample count of a window of `len_s` seconds, never below one sample.
fn window_samples(len_s: f64, sample_rate: f64) -> usize {
    ((len_s * sample_rate).round() as usize).max(1)
}

/// Mean squared amplitude over `[start_s, start_s + len_s)`.
pub fn energy_window(a: &AudioBuffer, start_s: f64, len_s: f64) -> Result<f64> {
    if !(len_s > 0.0) {
        return Err(Error::Contract(format!("window length must be positive, got {len_s}")));
    }
    let start = (start_s * a.sample_rate).round() as i64;
    let n = window_samples(len_s, a.sample_rate) as i64;
    if start < 0 || start + n > a.samples.len() as i64 {
        return Err(Error::Contract(format!(
            "window [{start_s} s, +{len_s} s) falls outside the {:.4} s buffer",
            a.duration_s()
        )));
    }
    let w = &a.samples[start as usize..(start + n) as usize];
    Ok(w.iter().map(|s| s * s).sum::<f64>() / w.len() as f64)
}

/// One splice point's energy measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceRow {
    pub t_s: f64,
    pub e_pre: f64,
    pub e_post: f64,
    pub delta: f64,
}

/// Mean absolute energy change across the 10 ms windows straddling each
/// splice point. Returns the aggregate and the per-point rows.
pub fn energy_delta_10ms(a: &AudioBuffer, sp: &SplicePoints) -> Result<(f64, Vec<SpliceRow>)> {
    if sp.times_s.is_empty() {
        return Err(Error::Contract(
            "energy delta is undefined without splice points".into(),
        ));
    }
    let n = window_samples(0.010, a.sample_rate) as i64;
    let len = a.samples.len() as i64;
    let mut rows = Vec::with_capacity(sp.times_s.len());
    for &t in &sp.times_s {
        let split = (t * a.sample_rate).round() as i64;
        if split - n < 0 || split + n > len {
            return Err(Error::Contract(format!(
                "splice point {t} s lacks 10 ms of audio on both sides"
            )));
        }
        let pre = &a.samples[(split - n) as usize..split as usize];
        let post = &a.samples[split as usize..(split + n) as usize];
        let e_pre = pre.iter().map(|s| s * s).sum::<f64>() / pre.len() as f64;
        let e_post = post.iter().map(|s| s * s).sum::<f64>() / post.len() as f64;
        rows.push(SpliceRow { t_s: t, e_pre, e_post, delta: (e_pre - e_post).abs() });
    }
    let avg = rows.iter().map(|r| r.delta).sum::<f64>() / rows.len() as f64;
    Ok((avg, rows))
}

/// `|Δavg(generated) − Δavg(ground truth)|` over the same splice points.
pub fn energy_delta_vs_gt(
    gen: &AudioBuffer,
    gt: &AudioBuffer,
    sp: &SplicePoints,
) -> Result<f64> {
    if (gen.duration_s() - gt.duration_s()).abs() > 0.010 + 1e-9 {
        return Err(Error::Contract(format!(
            "generated ({:.4} s) and ground-truth ({:.4} s) durations differ by more than 10 ms",
            gen.duration_s(),
            gt.duration_s()
        )));
    }
    let (a, _) = energy_delta_10ms(gen, sp)?;
    let (b, _) = energy_delta_10ms(gt, sp)?;
    Ok((a - b).abs())
}

/// Canonical metric keys used across reports.
pub mod names {
    pub const ENERGY_DELTA: &str = "energy_delta_10ms";
    pub const ENERGY_DELTA_VS_GT: &str = "energy_delta_10ms_vs_gt";
    pub const FRECHET: &str = "frechet_distance";
    pub const KL: &str = "kl_paired";
    pub const INCEPTION: &str = "inception_score";
    pub const IB: &str = "ib_score";
}

/// Named scalar metrics (`None` = skipped) plus per-splice rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, Option<f64>>,
    pub splices: Vec<SpliceRow>,
}

impl MetricReport {
    /// The spliced aggregate must equal the mean of its rows.
    pub fn check_consistent(&self) -> Result<()> {
        if let Some(Some(agg)) = self.metrics.get(names::ENERGY_DELTA) {
            if self.splices.is_empty() {
                return Err(Error::Contract(
                    "energy aggregate reported without per-splice rows".into(),
                ));
            }
            let mean =
                self.splices.iter().map(|r| r.delta).sum::<f64>() / self.splices.len() as f64;
            if (mean - agg).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "energy aggregate {agg} disagrees with row mean {mean}"
                )));
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// One row per splice point plus a final `mean` summary row.
    pub fn save_splices_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| {
            Error::format(path, format!("cannot write csv: {e}"))
        })?;
        w.write_record(["t_s", "e_pre", "e_post", "delta"])
            .map_err(|e| Error::format(path, e.to_string()))?;
        let fmt = |v: f64| format!("{v}");
        for r in &self.splices {
            w.write_record([fmt(r.t_s), fmt(r.e_pre), fmt(r.e_post), fmt(r.delta)])
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        if !self.splices.is_empty() {
            let n = self.splices.len() as f64;
            let m = |f: fn(&SpliceRow) -> f64| self.splices.iter().map(f).sum::<f64>() / n;
            w.write_record([
                "mean".to_string(),
                fmt(m(|r| r.e_pre)),
                fmt(m(|r| r.e_post)),
                fmt(m(|r| r.delta)),
            ])
            .map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use crate::tensor::DenseTensor;

    fn constant(sr: f64, dur_s: f64, level: f64) -> AudioBuffer {
        AudioBuffer::new(sr, vec![level; (sr * dur_s) as usize]).unwrap()
    }

    #[test]
    fn constant_half_amplitude_has_quarter_energy() {
        let a = constant(1000.0, 1.0, 0.5);
        assert_eq!(energy_window(&a, 0.2, 0.1).unwrap(), 0.25);
    }

    #[test]
    fn silence_has_zero_energy() {
        let a = constant(48000.0, 0.5, 0.0);
        assert_eq!(energy_window(&a, 0.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn sine_energy_is_half_amplitude_squared() {
        let sr = 8000.0;
        let amp = 0.8;
        let freq = 100.0; // whole periods in a 0.1 s window
        let samples: Vec<f64> = (0..(sr as usize))
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin())
            .collect();
        let a = AudioBuffer::new(sr, samples).unwrap();
        let e = energy_window(&a, 0.0, 0.1).unwrap();
        assert!((e - amp * amp / 2.0).abs() < 1e-3, "{e}");
    }

    #[test]
    fn out_of_range_window_is_rejected() {
        let a = constant(1000.0, 1.0, 0.1);
        assert!(energy_window(&a, 0.95, 0.2).is_err());
        assert!(energy_window(&a, 0.1, 0.0).is_err());
        assert!(energy_window(&a, -0.2, 0.1).is_err());
    }

    #[test]
    fn constant_signal_has_zero_delta_everywhere() {
        let a = constant(44100.0, 2.0, 0.3);
        let sp = SplicePoints { times_s: vec![0.5, 1.0, 1.5] };
        let (avg, rows) = energy_delta_10ms(&a, &sp).unwrap();
        assert_eq!(avg, 0.0);
        assert!(rows.iter().all(|r| r.delta == 0.0));
    }

    #[test]
    fn amplitude_step_delta_is_exact() {
        // 0.2 before the 1 s splice, 0.6 after: Δ = |0.04 − 0.36| = 0.32.
        let sr = 16000.0;
        let mut samples = vec![0.2; 16000];
        samples.extend(vec![0.6; 16000]);
        let a = AudioBuffer::new(sr, samples).unwrap();
        let sp = SplicePoints { times_s: vec![1.0] };
        let (avg, rows) = energy_delta_10ms(&a, &sp).unwrap();
        assert!((avg - 0.32).abs() < 1e-12, "{avg}");
        assert_eq!(rows.len(), 1);
        assert!((rows[0].e_pre - 0.04).abs() < 1e-12);
        assert!((rows[0].e_post - 0.36).abs() < 1e-12);
    }

    #[test]
    fn empty_splice_list_is_undefined() {
        let a = constant(1000.0, 1.0, 0.1);
        let sp = SplicePoints { times_s: vec![] };
        assert!(matches!(energy_delta_10ms(&a, &sp), Err(Error::Contract(_))));
    }

    #[test]
    fn splice_too_close_to_the_edge_names_the_point() {
        let a = constant(1000.0, 1.0, 0.1);
        let sp = SplicePoints { times_s: vec![0.005] };
        let err = energy_delta_10ms(&a, &sp).unwrap_err();
        assert!(err.to_string().contains("0.005"), "{err}");
    }

    #[test]
    fn polarity_flip_never_changes_delta_and_gain_squares_it() {
        let mut rng = DetRng::new(5, "energy");
        let sr = 12000.0;
        let samples: Vec<f64> = (0..24000).map(|_| rng.normal() * 0.2).collect();
        let a = AudioBuffer::new(sr, samples.clone()).unwrap();
        let flipped = AudioBuffer::new(sr, samples.iter().map(|s| -s).collect()).unwrap();
        let gained = AudioBuffer::new(sr, samples.iter().map(|s| 3.0 * s).collect()).unwrap();
        let sp = SplicePoints { times_s: vec![0.5, 1.0, 1.5] };
        let (avg, _) = energy_delta_10ms(&a, &sp).unwrap();
        let (avg_f, _) = energy_delta_10ms(&flipped, &sp).unwrap();
        let (avg_g, _) = energy_delta_10ms(&gained, &sp).unwrap();
        assert_eq!(avg, avg_f);
        assert!((avg_g - 9.0 * avg).abs() < 1e-12 * avg_g.max(1.0));
    }

    #[test]
    fn vs_gt_is_zero_for_identical_signals_and_symmetric() {
        let mut rng = DetRng::new(6, "vsgt");
        let sr = 8000.0;
        let make = |rng: &mut DetRng, step: f64| {
            let mut s: Vec<f64> = (0..16000).map(|_| rng.normal() * 0.1).collect();
            for v in s.iter_mut().skip(8000) {
                *v += step;
            }
            AudioBuffer::new(sr, s).unwrap()
        };
        let gen = make(&mut rng, 0.4);
        let gt = make(&mut rng, 0.1);
        let sp = SplicePoints { times_s: vec![1.0] };
        assert_eq!(energy_delta_vs_gt(&gt, &gt, &sp).unwrap(), 0.0);
        let ab = energy_delta_vs_gt(&gen, &gt, &sp).unwrap();
        let ba = energy_delta_vs_gt(&gt, &gen, &sp).unwrap();
        assert_eq!(ab, ba);
        assert!(ab > 0.0);
    }

    #[test]
    fn vs_gt_with_constructed_step_deltas() {
        // gen Δavg = 0.3, gt Δavg = 0.1 via amplitude steps around 1 s.
        let sr = 10000.0;
        let step_buffer = |pre: f64, post: f64| {
            let mut s = vec![pre; 10000];
            s.extend(vec![post; 10000]);
            AudioBuffer::new(sr, s).unwrap()
        };
        // Δ = |pre² − post²|: pick pre=0, post so post² = target.
        let gen = step_buffer(0.0, (0.3f64).sqrt());
        let gt = step_buffer(0.0, (0.1f64).sqrt());
        let sp = SplicePoints { times_s: vec![1.0] };
        let d = energy_delta_vs_gt(&gen, &gt, &sp).unwrap();
        assert!((d - 0.2).abs() < 1e-12, "{d}");
    }

    #[test]
    fn duration_mismatch_is_rejected() {
        let a = constant(1000.0, 2.0, 0.1);
        let b = constant(1000.0, 1.5, 0.1);
        let sp = SplicePoints { times_s: vec![1.0] };
        assert!(energy_delta_vs_gt(&a, &b, &sp).is_err());
    }

    #[test]
    fn latent_proxy_uses_frame_l2_norms_at_latent_rate() {
        let latents = DenseTensor::from_rows(&[
            vec![3.0, 4.0], // L2 = 5
            vec![0.0, 0.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let seq = LatentSequence::new(latents).unwrap();
        let a = latent_energy_proxy(&seq).unwrap();
        assert_eq!(a.sample_rate, 31.25);
        assert_eq!(a.samples, vec![5.0, 0.0, 1.0]);
        // 10 ms at 31.25 fps clamps to a single frame.
        assert_eq!(window_samples(0.010, 31.25), 1);
    }

    #[test]
    fn report_consistency_check_catches_tampering() {
        let a = constant(16000.0, 2.0, 0.25);
        let sp = SplicePoints { times_s: vec![0.5, 1.5] };
        let (avg, rows) = energy_delta_10ms(&a, &sp).unwrap();
        let mut report = MetricReport::default();
        report.metrics.insert(names::ENERGY_DELTA.into(), Some(avg));
        report.splices = rows;
        report.check_consistent().unwrap();
        report.metrics.insert(names::ENERGY_DELTA.into(), Some(avg + 0.5));
        assert!(report.check_consistent().is_err());
    }

    #[test]
    fn report_round_trips_json_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = MetricReport::default();
        report.metrics.insert(names::ENERGY_DELTA.into(), Some(0.25));
        report.metrics.insert(names::FRECHET.into(), None);
        report.splices = vec![
            SpliceRow { t_s: 2.0, e_pre: 0.5, e_post: 0.25, delta: 0.25 },
            SpliceRow { t_s: 4.0, e_pre: 0.25, e_post: 0.5, delta: 0.25 },
        ];
        let jpath = dir.path().join("report.json");
        report.save_json(&jpath).unwrap();
        assert_eq!(MetricReport::load_json(&jpath).unwrap(), report);

        let cpath = dir.path().join("splices.csv");
        report.save_splices_csv(&cpath).unwrap();
        let text = std::fs::read_to_string(&cpath).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t_s,e_pre,e_post,delta");
        assert_eq!(lines.next().unwrap(), "2,0.5,0.25,0.25");
        assert_eq!(lines.next().unwrap(), "4,0.25,0.5,0.25");
        assert_eq!(lines.next().unwrap(), "mean,0.375,0.375,0.25");
    }
}
