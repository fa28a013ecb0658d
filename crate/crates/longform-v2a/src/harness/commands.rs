//! Command implementations behind the `lfv2a` binary.
//!
//! Each command is a plain function over paths and the experiment config so
//! tests can drive the full pipeline without spawning processes. All printing
//! stays in the binary; commands return the data they produced.

use crate::adapters::{init_adapter_params, ADAPTER_PREFIX, GLOBAL_ADAPTER, SYN_ADAPTER};
use crate::conditioning::init_conditioning_params;
use crate::error::{Error, Result};
use crate::generator::train::{train, TrainConfig, TrainLogEntry, TrainMode, TrainVideo};
use crate::generator::{generate_long_form, generate_long_form_baseline, init_dit_params};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint};
use crate::harness::config::ExperimentConfig;
use crate::harness::synth::{load_dataset, synth_dataset, DatasetIndex, LoadedVideo};
use crate::ldt;
use crate::metrics::distribution::{frechet_distance, ib_score, inception_score, kl_paired};
use crate::metrics::ingest::{load_embedding_set, load_logit_set, resolve_paired};
use crate::metrics::{energy_delta_10ms, latent_energy_proxy, names, MetricReport, SpliceRow};
use crate::rng::DetRng;
use crate::stream::{LatentSequence, SplicePoints};
use crate::tensor::store::ParameterStore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Which conditioning path `generate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Per-clip conditions only.
    Baseline,
    /// Global bundle fused through the adapters.
    Adapters,
}

impl GenMode {
    pub fn name(self) -> &'static str {
        match self {
            GenMode::Baseline => "baseline",
            GenMode::Adapters => "adapters",
        }
    }
}

/// Index written next to per-video generation outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedIndex {
    pub mode: String,
    pub videos: Vec<String>,
}

/// Per-video generation metadata (`splices.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedMeta {
    pub duration_s: f64,
    pub times_s: Vec<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Synthesize the dataset under `out`.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetIndex> {
    synth_dataset::<f32>(cfg, out)
}

/// The config must describe the dataset it runs against.
fn check_dims(cfg: &ExperimentConfig, index: &DatasetIndex) -> Result<()> {
    if cfg.dataset.dims() != index.dataset.dims() {
        return Err(Error::Config(format!(
            "config dims {:?} differ from dataset dims {:?}",
            cfg.dataset.dims(),
            index.dataset.dims()
        )));
    }
    Ok(())
}

fn fresh_store(cfg: &ExperimentConfig) -> Result<ParameterStore<f32>> {
    let mut store = ParameterStore::new();
    let dims = cfg.dataset.dims();
    init_conditioning_params(
        &mut store,
        &dims,
        &cfg.cond_config(),
        &mut DetRng::new(cfg.seed, "init.cond"),
    )?;
    init_dit_params(&mut store, &cfg.dit_config(), &mut DetRng::new(cfg.seed, "init.dit"))?;
    Ok(store)
}

fn ensure_adapters(cfg: &ExperimentConfig, store: &mut ParameterStore<f32>) -> Result<()> {
    if store.elements_with_prefix(ADAPTER_PREFIX) > 0 {
        return Ok(());
    }
    let hidden = cfg.conditioning.hidden_dim;
    let mut rng = DetRng::new(cfg.seed, "init.adapters");
    init_adapter_params(store, GLOBAL_ADAPTER, &cfg.adapters.global_config(hidden), &mut rng)?;
    init_adapter_params(store, SYN_ADAPTER, &cfg.adapters.syn_config(hidden), &mut rng)
}

/// Train from a dataset; write `checkpoint/` and `train_log.jsonl` under `out`.
///
/// `finetune_all` updates everything without fusion; `adapters_only` freezes
/// the base model, fuses the global bundle, and initializes adapters if the
/// starting checkpoint lacks them.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    dataset_dir: &Path,
    mode: TrainMode,
    init_from: Option<&Path>,
    out: &Path,
) -> Result<Vec<TrainLogEntry>> {
    let (index, videos) = load_dataset::<f32>(dataset_dir)?;
    check_dims(cfg, &index)?;
    let dataset: Vec<TrainVideo<f32>> = videos.iter().map(|v| v.train_video()).collect();

    let mut store = match init_from {
        Some(p) => load_checkpoint::<f32>(p)?,
        None => fresh_store(cfg)?,
    };
    if mode == TrainMode::AdaptersOnly {
        ensure_adapters(cfg, &mut store)?;
    }

    let t = &cfg.train;
    let train_cfg = TrainConfig {
        steps: if mode == TrainMode::AdaptersOnly { t.adapter_steps } else { t.steps },
        lr: if mode == TrainMode::AdaptersOnly { t.adapter_lr } else { t.lr },
        momentum: t.momentum,
        grad_clip: t.grad_clip,
        mode,
        fuse_adapters: mode == TrainMode::AdaptersOnly,
        seed: cfg.seed,
    };
    let log = train(&mut store, &dataset, &cfg.dit_config(), &cfg.cond_config(), &train_cfg)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_checkpoint(out.join("checkpoint"), &store)?;
    let log_path = out.join("train_log.jsonl");
    let mut lines = String::new();
    for entry in &log {
        lines.push_str(&serde_json::to_string(entry).map_err(|e| Error::json(&log_path, e))?);
        lines.push('\n');
    }
    std::fs::write(&log_path, lines).map_err(|e| Error::io(&log_path, e))?;
    Ok(log)
}

/// Generate long-form latents for every dataset video; per-video outputs are
/// `<id>/generated.ldt` and `<id>/splices.json` under `out`.
pub fn cmd_generate(
    cfg: &ExperimentConfig,
    dataset_dir: &Path,
    checkpoint_dir: &Path,
    mode: GenMode,
    out: &Path,
) -> Result<GeneratedIndex> {
    let (index, videos) = load_dataset::<f32>(dataset_dir)?;
    check_dims(cfg, &index)?;
    let store = load_checkpoint::<f32>(checkpoint_dir)?;
    if mode == GenMode::Adapters && store.elements_with_prefix(ADAPTER_PREFIX) == 0 {
        return Err(Error::Contract(format!(
            "checkpoint {} has no adapter parameters; `generate --mode adapters` needs them",
            checkpoint_dir.display()
        )));
    }
    let dit = cfg.dit_config();
    let cond = cfg.cond_config();

    // Per-video sampling is independent; order is pinned by the index, so the
    // parallel collect keeps the output deterministic.
    let results: Vec<(LatentSequence<f32>, SplicePoints)> = videos
        .par_iter()
        .map(|v| {
            let seed = DetRng::new(cfg.seed, &format!("gen.{}", v.video_id)).next_u64();
            match mode {
                GenMode::Baseline => {
                    generate_long_form_baseline(&store, &dit, &cond, &v.clips, seed)
                }
                GenMode::Adapters => {
                    generate_long_form(&store, &dit, &cond, &v.clips, &v.bundle, seed)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    for (v, (seq, sp)) in videos.iter().zip(&results) {
        let vdir = out.join(&v.video_id);
        std::fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        ldt::save(vdir.join("generated.ldt"), &seq.latents)?;
        let meta = GeneratedMeta { duration_s: seq.duration_s, times_s: sp.times_s.clone() };
        write_json(&vdir.join("splices.json"), &meta)?;
    }
    let gi = GeneratedIndex { mode: mode.name().into(), videos: index.videos };
    write_json(&out.join("generated.json"), &gi)?;
    Ok(gi)
}

/// Optional distribution-metric inputs; each tensor needs its sidecar, and
/// the sidecar's `paired_with` names the reference side.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub embeddings: Option<PathBuf>,
    pub logits: Option<PathBuf>,
    pub ib: Option<PathBuf>,
}

fn paired(path: &Path, sidecar: &crate::metrics::ingest::Sidecar) -> Result<PathBuf> {
    resolve_paired(path, sidecar).ok_or_else(|| {
        Error::Contract(format!(
            "{}: sidecar declares no paired_with reference",
            path.display()
        ))
    })
}

/// Evaluate generated latents against the dataset's ground truth; write
/// `report.json` (and `splices.csv` when there are splice rows) under `out`.
///
/// Metrics without inputs are reported as skipped, not errors.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    dataset_dir: &Path,
    generated_dir: &Path,
    inputs: &EvalInputs,
    out: &Path,
) -> Result<MetricReport> {
    let (index, videos) = load_dataset::<f32>(dataset_dir)?;
    check_dims(cfg, &index)?;
    let by_id: BTreeMap<&str, &LoadedVideo<f32>> =
        videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let gen_index: GeneratedIndex = read_json(&generated_dir.join("generated.json"))?;

    let mut gen_rows: Vec<SpliceRow> = Vec::new();
    let mut gt_rows: Vec<SpliceRow> = Vec::new();
    for video_id in &gen_index.videos {
        let v = by_id.get(video_id.as_str()).ok_or_else(|| {
            Error::Contract(format!("generated video {video_id} is not in the dataset"))
        })?;
        let vdir = generated_dir.join(video_id);
        let latents = ldt::load::<f32>(vdir.join("generated.ldt"))?;
        let meta: GeneratedMeta = read_json(&vdir.join("splices.json"))?;
        if latents.shape()[1] != v.target.dim() {
            return Err(Error::Shape(format!(
                "{video_id}: generated latent dim {} != ground-truth dim {}",
                latents.shape()[1],
                v.target.dim()
            )));
        }
        let seq = LatentSequence::with_duration(latents, meta.duration_s)?;
        let gen_buf = latent_energy_proxy(&seq)?;
        let gt_buf = latent_energy_proxy(&v.target)?;
        if (gen_buf.duration_s() - gt_buf.duration_s()).abs() > 0.010 + 1e-12 {
            return Err(Error::Contract(format!(
                "{video_id}: generated duration {:.4} s != ground truth {:.4} s",
                gen_buf.duration_s(),
                gt_buf.duration_s()
            )));
        }
        let sp = SplicePoints { times_s: meta.times_s };
        if sp.times_s.is_empty() {
            continue; // single-clip video: nothing to splice-check
        }
        gen_rows.extend(energy_delta_10ms(&gen_buf, &sp)?.1);
        gt_rows.extend(energy_delta_10ms(&gt_buf, &sp)?.1);
    }

    let mut report = MetricReport::default();
    let mean = |rows: &[SpliceRow]| {
        rows.iter().map(|r| r.delta).sum::<f64>() / rows.len() as f64
    };
    let (energy, energy_vs_gt) = if gen_rows.is_empty() {
        (None, None)
    } else {
        (Some(mean(&gen_rows)), Some((mean(&gen_rows) - mean(&gt_rows)).abs()))
    };
    report.metrics.insert(names::ENERGY_DELTA.into(), energy);
    report.metrics.insert(names::ENERGY_DELTA_VS_GT.into(), energy_vs_gt);
    report.splices = gen_rows;

    let frechet = match &inputs.embeddings {
        None => None,
        Some(path) => {
            let (gen_set, sidecar) = load_embedding_set(path)?;
            let (ref_set, _) = load_embedding_set(&paired(path, &sidecar)?)?;
            Some(frechet_distance(&gen_set, &ref_set)?)
        }
    };
    report.metrics.insert(names::FRECHET.into(), frechet);

    let (kl, is) = match &inputs.logits {
        None => (None, None),
        Some(path) => {
            let (gen_set, sidecar) = load_logit_set(path)?;
            let (ref_set, _) = load_logit_set(&paired(path, &sidecar)?)?;
            (Some(kl_paired(&gen_set, &ref_set)?), Some(inception_score(&gen_set)?))
        }
    };
    report.metrics.insert(names::KL.into(), kl);
    report.metrics.insert(names::INCEPTION.into(), is);

    let ib = match &inputs.ib {
        None => None,
        Some(path) => {
            let (audio_set, sidecar) = load_embedding_set(path)?;
            let (visual_set, _) = load_embedding_set(&paired(path, &sidecar)?)?;
            Some(ib_score(&audio_set, &visual_set)?)
        }
    };
    report.metrics.insert(names::IB.into(), ib);

    report.check_consistent()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.save_json(&out.join("report.json"))?;
    if !report.splices.is_empty() {
        report.save_splices_csv(&out.join("splices.csv"))?;
    }
    Ok(report)
}

/// One comparison cell of the report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub run: String,
    pub value: Option<f64>,
    /// Signed percent change vs the first run; absent for the first run, for
    /// skipped metrics, and when the baseline value is 0.
    pub delta_pct: Option<f64>,
    pub improved: Option<bool>,
}

/// Cross-run comparison; the first run is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub runs: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Smaller-is-better for energy and distance metrics, larger for scores.
fn lower_is_better(metric: &str) -> bool {
    !matches!(metric, names::INCEPTION | names::IB)
}

/// Compare `report.json` across run directories; write `report_compare.json`
/// and `report_compare.csv` under `out`.
pub fn cmd_report(run_dirs: &[PathBuf], out: &Path) -> Result<ReportTable> {
    if run_dirs.is_empty() {
        return Err(Error::Config("report needs at least one run directory".into()));
    }
    let mut runs = Vec::with_capacity(run_dirs.len());
    let mut reports = Vec::with_capacity(run_dirs.len());
    for (i, dir) in run_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("run{i}"));
        // Same directory name twice stays distinguishable in the table.
        let name = if runs.contains(&name) { format!("{name}#{i}") } else { name };
        runs.push(name);
        reports.push(MetricReport::load_json(&dir.join("report.json"))?);
    }

    // Canonical metric order first, then anything unknown alphabetically.
    let canonical = [
        names::ENERGY_DELTA,
        names::ENERGY_DELTA_VS_GT,
        names::FRECHET,
        names::KL,
        names::INCEPTION,
        names::IB,
    ];
    let mut metric_names: Vec<String> = canonical
        .iter()
        .filter(|m| reports.iter().any(|r| r.metrics.contains_key(**m)))
        .map(|m| (*m).to_string())
        .collect();
    for r in &reports {
        for name in r.metrics.keys() {
            if !metric_names.iter().any(|m| m == name) {
                metric_names.push(name.clone());
            }
        }
    }

    let mut rows = Vec::new();
    for metric in &metric_names {
        let base = reports[0].metrics.get(metric).copied().flatten();
        for (i, (run, report)) in runs.iter().zip(&reports).enumerate() {
            let value = report.metrics.get(metric).copied().flatten();
            let (delta_pct, improved) = match (i, base, value) {
                (0, ..) | (_, None, _) | (_, _, None) => (None, None),
                (_, Some(old), Some(new)) => {
                    let delta = if old == 0.0 { None } else { Some((new - old) / old * 100.0) };
                    let better =
                        if lower_is_better(metric) { new < old } else { new > old };
                    (delta, Some(better))
                }
            };
            rows.push(ReportRow {
                metric: metric.clone(),
                run: run.clone(),
                value,
                delta_pct,
                improved,
            });
        }
    }

    let table = ReportTable { runs, rows };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("report_compare.json"), &table)?;

    let csv_path = out.join("report_compare.csv");
    let mut wtr = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::format(&csv_path, e.to_string()))?;
    wtr.write_record(["metric", "run", "value", "delta_pct", "improved"])
        .map_err(|e| Error::format(&csv_path, e.to_string()))?;
    for row in &table.rows {
        wtr.write_record([
            row.metric.clone(),
            row.run.clone(),
            row.value.map(|v| format!("{v}")).unwrap_or_else(|| "skipped".into()),
            row.delta_pct.map(|d| format!("{d:+.2}%")).unwrap_or_else(|| "n/a".into()),
            row.improved.map(|b| if b { "yes".into() } else { "no".into() })
                .unwrap_or_else(|| "n/a".to_string()),
        ])
        .map_err(|e| Error::format(&csv_path, e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(table)
}
