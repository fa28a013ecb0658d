//! Acceptance suite: every criterion prints one `ACCEPTANCE n (name): …`
//! line with its pinned tolerance and the measured value. All criteria run
//! even after a failure; the test panics at the end if any failed.

use longform_v2a::adapters::{
    budget_ratio, fuse_frame, fuse_global, init_adapter_params, param_budget, AdapterConfig,
    AdapterInit, GlobalFeatureBundle, GLOBAL_ADAPTER, SYN_ADAPTER,
};
use longform_v2a::conditioning::{
    build_frame_condition, build_global_condition, init_conditioning_params, ConditioningConfig,
};
use longform_v2a::generator::train::{eval_fixed_batch, make_eval_batch, TrainMode, TrainVideo};
use longform_v2a::generator::{cfm_loss_with_draw, init_dit_params, DiTConfig};
use longform_v2a::harness::commands::{
    cmd_eval, cmd_generate, cmd_synth, cmd_train, EvalInputs, GenMode,
};
use longform_v2a::harness::{load_checkpoint, load_dataset, ExperimentConfig};
use longform_v2a::ldt;
use longform_v2a::metrics::distribution::{
    frechet_distance, inception_score, EmbeddingSet, LogitSet,
};
use longform_v2a::metrics::{energy_delta_10ms, names, AudioBuffer};
use longform_v2a::rng::DetRng;
use longform_v2a::stream::{
    resample_stream, SplicePoints, StreamDims, StreamKind, TokenStream,
};
use longform_v2a::tensor::store::{finite_difference_check, ParameterStore};
use longform_v2a::tensor::{DenseTensor, Scalar};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Criterion 9 bound: final fused loss after 200 adapter-only steps must be
/// below this fraction of the frozen base loss. Calibrated once on the frozen
/// fixture (dataset seed 0, pipeline seed 1: ratio 0.673) and pinned.
const TRAIN_RATIO_BOUND: f64 = 0.70;

/// Criterion 3 thresholds over 10 pipeline seeds on the held-out videos.
const ENERGY_WINS_MIN: usize = 8;
const VS_GT_WINS_MIN: usize = 7;
const SPLICE_BUDGET_S: f64 = 600.0;

/// Criterion 4 bound on adapter/base parameter count.
const BUDGET_BOUND: f64 = 0.04;

/// Criterion 2 gradient tolerance: central differences at h = 1e-5 in f64.
const GRAD_REL_TOL: f64 = 1e-4;

type Outcome = Result<String, String>;

fn tiny_gen_cfg(rng: &mut DetRng) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = rng.below(1000);
    let hidden = [4usize, 8][rng.below(2) as usize];
    c.conditioning.hidden_dim = hidden;
    c.conditioning.timestamp_dim = [4usize, 8][rng.below(2) as usize];
    c.dit.hidden_dim = hidden;
    c.dit.n_heads = 1 + rng.below(2) as usize;
    c.dit.n_layers = 1 + rng.below(2) as usize;
    c.dit.steps = 1 + rng.below(3) as usize;
    c.dataset.n_videos = 1 + rng.below(2) as usize;
    c.dataset.visual_dim = 2 + rng.below(4) as usize;
    c.dataset.text_dim = 2 + rng.below(4) as usize;
    c.dataset.sync_dim = 2 + rng.below(4) as usize;
    c.dataset.latent_dim = 4 + rng.below(3) as usize;
    let clip = [0.5, 1.0][rng.below(2) as usize];
    let n_clips = 2 + rng.below(2) as usize;
    c.dataset.clip_duration_s = clip;
    c.dataset.video_duration_s = clip * n_clips as f64;
    c.adapters.bottleneck_dim = 2;
    c.train.steps = 2;
    c.train.adapter_steps = 0;
    c.train.lr = 0.01;
    c.validate().expect("random tiny config must validate");
    c
}

/// Criterion 1: with zero-initialized adapters, `generate --mode adapters`
/// writes byte-identical latents to `--mode baseline` from the same
/// checkpoint, across randomized tiny configs.
fn c1_zero_adapter_identity(root: &Path) -> Outcome {
    let mut rng = DetRng::new(41, "c1.configs");
    for i in 0..10 {
        let cfg = tiny_gen_cfg(&mut rng);
        let dir = root.join(format!("c1_{i}"));
        let data = dir.join("data");
        cmd_synth(&cfg, &data).map_err(|e| format!("config {i}: synth: {e}"))?;
        let base = dir.join("base");
        cmd_train(&cfg, &data, TrainMode::FinetuneAll, None, &base)
            .map_err(|e| format!("config {i}: base train: {e}"))?;
        // 0 adapter steps: attaches freshly zero-initialized adapters only.
        let tuned = dir.join("tuned");
        cmd_train(&cfg, &data, TrainMode::AdaptersOnly, Some(&base.join("checkpoint")), &tuned)
            .map_err(|e| format!("config {i}: adapter attach: {e}"))?;
        let ckpt = tuned.join("checkpoint");
        let gen_b = dir.join("gen_baseline");
        cmd_generate(&cfg, &data, &ckpt, GenMode::Baseline, &gen_b)
            .map_err(|e| format!("config {i}: baseline generate: {e}"))?;
        let gen_a = dir.join("gen_adapters");
        cmd_generate(&cfg, &data, &ckpt, GenMode::Adapters, &gen_a)
            .map_err(|e| format!("config {i}: adapters generate: {e}"))?;
        for v in 0..cfg.dataset.n_videos {
            let vid = format!("vid_{v:03}");
            for file in ["generated.ldt", "splices.json"] {
                let a = std::fs::read(gen_b.join(&vid).join(file))
                    .map_err(|e| format!("config {i}: read {vid}/{file}: {e}"))?;
                let b = std::fs::read(gen_a.join(&vid).join(file))
                    .map_err(|e| format!("config {i}: read {vid}/{file}: {e}"))?;
                if a != b {
                    return Err(format!(
                        "config {i}: {vid}/{file} differs between baseline and zero-adapter modes"
                    ));
                }
            }
        }
    }
    Ok("baseline == zero-adapter output bytes across 10 random tiny configs".into())
}

/// Bound token values away from zero so finite differences never sit on a
/// vanishing-gradient plateau.
fn biased(z: f64) -> f64 {
    z.signum() * (0.3 + 0.6 * z.abs().min(1.5))
}

fn biased_stream(kind: StreamKind, rows: usize, dim: usize, rate: f64, rng: &mut DetRng) -> TokenStream<f64> {
    let data: Vec<f64> = (0..rows * dim).map(|_| biased(rng.normal())).collect();
    TokenStream::new(kind, rate, DenseTensor::from_vec(vec![rows, dim], data).unwrap()).unwrap()
}

/// Criterion 2: reverse-mode gradients of the full fused flow-matching loss
/// (conditioning → both adapter fusions → DiT → MSE) match central finite
/// differences on every parameter element, in f64.
fn c2_gradient_check() -> Outcome {
    let dims = StreamDims { visual: 4, text: 3, sync: 3, audio_latent: 2 };
    let cond = ConditioningConfig { hidden_dim: 6, timestamp_dim: 6, absolute_time: true };
    let dit = DiTConfig { n_layers: 1, hidden_dim: 6, n_heads: 2, latent_dim: 2, steps: 1 };
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let mut store = ParameterStore::<f64>::new();
        let mut rng = DetRng::new(seed, "c2.init");
        init_conditioning_params(&mut store, &dims, &cond, &mut rng).unwrap();
        init_dit_params(&mut store, &dit, &mut rng).unwrap();
        // Random (not zero) init so every adapter path carries gradient.
        let rand = AdapterInit::Random;
        init_adapter_params(
            &mut store,
            GLOBAL_ADAPTER,
            &AdapterConfig { input_dim: 6, bottleneck_dim: 2, output_dim: 12, init: rand },
            &mut rng,
        )
        .unwrap();
        init_adapter_params(
            &mut store,
            SYN_ADAPTER,
            &AdapterConfig { input_dim: 6, bottleneck_dim: 2, output_dim: 6, init: rand },
            &mut rng,
        )
        .unwrap();
        store.set_trainable_prefix("", true);

        let mut srng = DetRng::new(seed, "c2.streams");
        // A 1 s parent video; the loss covers its second half-clip.
        let (start_s, end_s) = (0.5, 1.0);
        let sync = biased_stream(StreamKind::Sync, 12, 3, 24.0, &mut srng);
        let visual = biased_stream(StreamKind::Visual, 4, 4, 8.0, &mut srng);
        let text = biased_stream(StreamKind::Text, 5, 3, 0.0, &mut srng);
        let bundle = GlobalFeatureBundle::new(
            biased_stream(StreamKind::Visual, 8, 4, 8.0, &mut srng),
            biased_stream(StreamKind::Text, 5, 3, 0.0, &mut srng),
            biased_stream(StreamKind::Sync, 24, 3, 24.0, &mut srng),
        )
        .unwrap();
        let t_a = 15; // round(31.25·1.0) − round(31.25·0.5)
        let target = DenseTensor::from_vec(
            vec![t_a, 2],
            (0..t_a * 2).map(|_| biased(srng.normal())).collect(),
        )
        .unwrap();
        let eps = DenseTensor::from_vec(
            vec![t_a, 2],
            (0..t_a * 2).map(|_| srng.normal()).collect(),
        )
        .unwrap();
        let t = 0.3 + 0.4 * srng.uniform();

        let report = finite_difference_check(
            |g, s| {
                let cf = build_frame_condition(g, s, &sync)?;
                let cf = g.align_rows(cf, t_a, 1)?;
                let cg = build_global_condition(g, s, &cond, &visual, &text, start_s)?;
                let cg = fuse_global(g, s, cg, &bundle, GLOBAL_ADAPTER)?;
                let cf = fuse_frame(g, s, cf, &bundle, SYN_ADAPTER, (start_s, end_s))?;
                let (loss, _) = cfm_loss_with_draw(g, s, &dit, &target, cg, cf, t, &eps)?;
                Ok(loss)
            },
            &store,
            1e-5,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        checked += report.checked;
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
        }
        if report.max_rel_err >= GRAD_REL_TOL {
            return Err(format!(
                "seed {seed}: rel err {:.3e} at {}[{}] (tolerance {GRAD_REL_TOL:.0e})",
                report.max_rel_err, report.worst_param, report.worst_index
            ));
        }
    }
    Ok(format!(
        "max rel err {worst:.3e} over {checked} parameter elements, 20 seeds (tol {GRAD_REL_TOL:.0e})"
    ))
}

/// Criterion 3: across 10 pipeline seeds, adapter-fused generation beats the
/// per-clip baseline on held-out videos: splice EnergyΔ10ms in ≥ 8/10 and
/// EnergyΔ10ms-vs-GT in ≥ 7/10, inside the CPU budget.
fn c3_splice_improvement(data: &Path, heldout: &Path, root: &Path) -> (Outcome, Option<PathBuf>) {
    let t0 = Instant::now();
    let mut energy_wins = 0usize;
    let mut gt_wins = 0usize;
    let mut seed1_base: Option<PathBuf> = None;
    for seed in 1..=10u64 {
        let mut c = ExperimentConfig::default();
        c.seed = seed;
        let base = root.join(format!("c3_s{seed}_base"));
        if let Err(e) = cmd_train(&c, data, TrainMode::FinetuneAll, None, &base) {
            return (Err(format!("seed {seed}: base train: {e}")), seed1_base);
        }
        let tuned = root.join(format!("c3_s{seed}_tuned"));
        if let Err(e) =
            cmd_train(&c, data, TrainMode::AdaptersOnly, Some(&base.join("checkpoint")), &tuned)
        {
            return (Err(format!("seed {seed}: adapter train: {e}")), seed1_base);
        }
        let gen_b = root.join(format!("c3_s{seed}_gen_b"));
        let gen_a = root.join(format!("c3_s{seed}_gen_a"));
        let r = cmd_generate(&c, heldout, &base.join("checkpoint"), GenMode::Baseline, &gen_b)
            .and_then(|_| {
                cmd_generate(&c, heldout, &tuned.join("checkpoint"), GenMode::Adapters, &gen_a)
            });
        if let Err(e) = r {
            return (Err(format!("seed {seed}: generate: {e}")), seed1_base);
        }
        let eval = |gen: &Path, out: &Path| {
            cmd_eval(&c, heldout, gen, &EvalInputs::default(), out)
                .map_err(|e| format!("seed {seed}: eval: {e}"))
        };
        let eb = match eval(&gen_b, &root.join(format!("c3_s{seed}_eval_b"))) {
            Ok(r) => r,
            Err(e) => return (Err(e), seed1_base),
        };
        let ea = match eval(&gen_a, &root.join(format!("c3_s{seed}_eval_a"))) {
            Ok(r) => r,
            Err(e) => return (Err(e), seed1_base),
        };
        if ea.metrics[names::ENERGY_DELTA].unwrap() < eb.metrics[names::ENERGY_DELTA].unwrap() {
            energy_wins += 1;
        }
        if ea.metrics[names::ENERGY_DELTA_VS_GT].unwrap()
            < eb.metrics[names::ENERGY_DELTA_VS_GT].unwrap()
        {
            gt_wins += 1;
        }
        if seed == 1 {
            seed1_base = Some(base.join("checkpoint"));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let detail = format!(
        "energy wins {energy_wins}/10 (need ≥{ENERGY_WINS_MIN}), vsGT wins {gt_wins}/10 \
         (need ≥{VS_GT_WINS_MIN}), {elapsed:.0} s (< {SPLICE_BUDGET_S:.0} s)"
    );
    let pass = energy_wins >= ENERGY_WINS_MIN && gt_wins >= VS_GT_WINS_MIN
        && elapsed < SPLICE_BUDGET_S;
    (if pass { Ok(detail) } else { Err(detail) }, seed1_base)
}

/// Criterion 4: adapters stay within the parameter budget at the default
/// config, and the raw-count helper matches a hand-computed reference.
fn c4_param_budget() -> Outcome {
    let cfg = ExperimentConfig::default();
    let h = cfg.dit.hidden_dim;
    let mut base = ParameterStore::<f32>::new();
    let mut rng = DetRng::new(0, "c4.init");
    init_conditioning_params(&mut base, &cfg.dataset.dims(), &cfg.cond_config(), &mut rng)
        .map_err(|e| e.to_string())?;
    init_dit_params(&mut base, &cfg.dit_config(), &mut rng).map_err(|e| e.to_string())?;
    let mut adapters = ParameterStore::<f32>::new();
    init_adapter_params(&mut adapters, GLOBAL_ADAPTER, &cfg.adapters.global_config(h), &mut rng)
        .map_err(|e| e.to_string())?;
    init_adapter_params(&mut adapters, SYN_ADAPTER, &cfg.adapters.syn_config(h), &mut rng)
        .map_err(|e| e.to_string())?;
    let ratio = param_budget(&base, &adapters).map_err(|e| e.to_string())?;
    if ratio > BUDGET_BOUND {
        return Err(format!("default-config adapter budget {ratio:.4} > {BUDGET_BOUND}"));
    }
    let reference = budget_ratio(40_000, 1_030_000).map_err(|e| e.to_string())?;
    if (reference - 0.0388).abs() >= 1e-4 {
        return Err(format!("budget_ratio(40k, 1.03M) = {reference:.6}, expected 0.0388 ± 1e-4"));
    }
    Ok(format!("default-config budget {ratio:.4} ≤ {BUDGET_BOUND}; reference ratio {reference:.4}"))
}

/// Criterion 5: metric oracles — piecewise-constant energy fixtures match
/// closed form to 1e-9; Fréchet distance on Monte-Carlo Gaussians lands
/// within 3 bootstrap σ of ‖μ‖²; one-hot logits give IS = C.
fn c5_metric_oracles() -> Outcome {
    let t0 = Instant::now();

    // (a) Piecewise-constant buffers: every window sits inside one segment,
    // so EnergyΔ10ms is exactly the mean |v_k² − v_{k+1}²| across splices.
    let mut rng = DetRng::new(17, "c5.energy");
    let mut worst_energy = 0.0f64;
    for i in 0..100 {
        let sr = [8000.0, 16000.0][rng.below(2) as usize];
        let n_seg = 2 + rng.below(3) as usize;
        let levels: Vec<f64> = (0..n_seg).map(|_| rng.uniform_in(0.2, 2.0)).collect();
        let seg_s: Vec<f64> = (0..n_seg).map(|_| rng.uniform_in(0.1, 0.4)).collect();
        let mut samples = Vec::new();
        let mut splices = Vec::new();
        let mut acc = 0.0;
        for (k, (&v, &len)) in levels.iter().zip(&seg_s).enumerate() {
            let n = (len * sr).round() as usize;
            samples.extend(std::iter::repeat(v).take(n));
            acc += n as f64 / sr; // realized boundary, exactly on a sample
            if k + 1 < n_seg {
                splices.push(acc);
            }
        }
        let expect = levels
            .windows(2)
            .map(|w| (w[0] * w[0] - w[1] * w[1]).abs())
            .sum::<f64>()
            / (n_seg - 1) as f64;
        let audio = AudioBuffer::new(sr, samples).map_err(|e| format!("fixture {i}: {e}"))?;
        let (delta, _) = energy_delta_10ms(&audio, &SplicePoints { times_s: splices })
            .map_err(|e| format!("fixture {i}: {e}"))?;
        let err = (delta - expect).abs();
        worst_energy = worst_energy.max(err);
        if err >= 1e-9 {
            return Err(format!("fixture {i}: EnergyΔ10ms off closed form by {err:.3e} (≥ 1e-9)"));
        }
    }

    // (b) Fréchet on N(0, I) vs N(μ, I): analytic distance is ‖μ‖².
    let (n, d) = (20_000usize, 4usize);
    let mu = [1.0, 0.5, -0.25, 0.75];
    let analytic: f64 = mu.iter().map(|m| m * m).sum();
    let mut grng = DetRng::new(23, "c5.frechet");
    let mut x = vec![0.0f64; n * d];
    grng.fill_normal(&mut x);
    let mut y = vec![0.0f64; n * d];
    grng.fill_normal(&mut y);
    for r in 0..n {
        for c in 0..d {
            y[r * d + c] += mu[c];
        }
    }
    let set = |data: &[f64]| {
        EmbeddingSet::new(
            DenseTensor::from_vec(vec![n, d], data.to_vec()).unwrap(),
            "c5.mc",
        )
        .unwrap()
    };
    let fd = frechet_distance(&set(&x), &set(&y)).map_err(|e| e.to_string())?;
    let mut boots = Vec::with_capacity(20);
    for _ in 0..20 {
        let resample = |src: &[f64], rng: &mut DetRng| {
            let mut out = vec![0.0f64; n * d];
            for r in 0..n {
                let j = rng.below(n as u64) as usize;
                out[r * d..(r + 1) * d].copy_from_slice(&src[j * d..(j + 1) * d]);
            }
            out
        };
        let bx = resample(&x, &mut grng);
        let by = resample(&y, &mut grng);
        boots.push(frechet_distance(&set(&bx), &set(&by)).map_err(|e| e.to_string())?);
    }
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let sigma = (boots.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>()
        / (boots.len() - 1) as f64)
        .sqrt();
    if (fd - analytic).abs() > 3.0 * sigma + 1e-6 {
        return Err(format!(
            "Fréchet MC {fd:.4} vs analytic {analytic:.4}: |Δ| > 3σ_boot ({sigma:.5})"
        ));
    }

    // (c) Confident one-hot logits spread over C classes: IS = C exactly.
    let classes = 7usize;
    let rows = 70usize;
    let mut logits = vec![0.0f64; rows * classes];
    for r in 0..rows {
        logits[r * classes + (r % classes)] = 50.0;
    }
    let is = inception_score(
        &LogitSet::new(DenseTensor::from_vec(vec![rows, classes], logits).unwrap(), "c5.onehot")
            .unwrap(),
    )
    .map_err(|e| e.to_string())?;
    if (is - classes as f64).abs() >= 1e-6 {
        return Err(format!("one-hot IS {is:.8} != {classes} (tol 1e-6)"));
    }

    let elapsed = t0.elapsed().as_secs_f64();
    if elapsed >= 120.0 {
        return Err(format!("metric oracles took {elapsed:.1} s (budget 120 s)"));
    }
    Ok(format!(
        "energy worst err {worst_energy:.2e} (tol 1e-9); Fréchet {fd:.4} vs {analytic:.3} \
         (3σ = {:.4}); IS(one-hot×7) = {is:.6}; {elapsed:.1} s < 120 s",
        3.0 * sigma
    ))
}

/// Criterion 6: a hard gain step at the splice always scores a strictly
/// higher EnergyΔ10ms than the same step smoothed by a 50 ms crossfade.
fn c6_crossfade_oracle() -> Outcome {
    let sr = 16_000.0;
    let splice = 1.0;
    let mut rng = DetRng::new(29, "c6");
    let mut min_margin = f64::INFINITY;
    for i in 0..100 {
        let g1 = rng.uniform_in(0.4, 1.0);
        let step = rng.uniform_in(0.3, 0.5);
        let g2 = if rng.below(2) == 0 && g1 - step > 0.1 { g1 - step } else { g1 + step };
        let hz = rng.uniform_in(100.0, 1000.0);
        let tone = |fade: bool| -> Vec<f64> {
            (0..(2.0 * sr) as usize)
                .map(|k| {
                    let t = k as f64 / sr;
                    let gain = if fade {
                        let w = ((t - splice) / 0.050 + 0.5).clamp(0.0, 1.0);
                        g1 * (1.0 - w) + g2 * w
                    } else if t < splice {
                        g1
                    } else {
                        g2
                    };
                    gain * (2.0 * std::f64::consts::PI * hz * t).sin()
                })
                .collect()
        };
        let sp = SplicePoints { times_s: vec![splice] };
        let measure = |samples: Vec<f64>| -> Result<f64, String> {
            let (d, _) = energy_delta_10ms(&AudioBuffer::new(sr, samples).unwrap(), &sp)
                .map_err(|e| format!("case {i}: {e}"))?;
            Ok(d)
        };
        let hard = measure(tone(false))?;
        let faded = measure(tone(true))?;
        if hard <= faded {
            return Err(format!(
                "case {i} (g {g1:.2}→{g2:.2}, {hz:.0} Hz): step Δ {hard:.5} ≤ crossfade Δ {faded:.5}"
            ));
        }
        min_margin = min_margin.min(hard - faded);
    }
    Ok(format!("step > 50 ms-crossfade in 100/100 cases; min margin {min_margin:.4}"))
}

/// Criterion 7: the resampler obeys `T' = round(T · target/source)` exactly
/// across a duration × rate grid.
fn c7_resample_law() -> Outcome {
    let pairs: [(f64, f64); 3] = [(24.0, 31.25), (8.0, 31.25), (31.25, 31.25)];
    let durations: [f64; 5] = [1.0, 2.0, 7.68, 8.0, 60.0];
    let mut cases = 0;
    for &(src, dst) in &pairs {
        for &dur in &durations {
            let rows = (dur * src).round() as usize;
            let stream = TokenStream::new(
                StreamKind::Sync,
                src,
                DenseTensor::from_vec(vec![rows, 3], vec![0.5f32; rows * 3]).unwrap(),
            )
            .unwrap();
            let out = resample_stream(&stream, dst).map_err(|e| e.to_string())?;
            let want = (rows as f64 * dst / src).round() as usize;
            if out.len() != want {
                return Err(format!(
                    "{src}→{dst} fps over {dur} s: got {} rows, law says {want}",
                    out.len()
                ));
            }
            cases += 1;
        }
    }
    Ok(format!("T' == round(T·target/source) exact in {cases}/15 grid cases"))
}

/// Collect every file under `dir` as relative-path → bytes, with
/// `train_log.jsonl` normalized by dropping the wall-clock field.
fn dir_snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> Result<(), String> {
        for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
            let entry = entry.map_err(|e| e.to_string())?;
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            let mut bytes =
                std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            if path.file_name().is_some_and(|n| n == "train_log.jsonl") {
                let text = String::from_utf8(bytes).map_err(|e| e.to_string())?;
                let mut normalized = String::new();
                for line in text.lines() {
                    let mut v: serde_json::Value =
                        serde_json::from_str(line).map_err(|e| e.to_string())?;
                    v.as_object_mut().and_then(|o| o.remove("wall_ms"));
                    normalized.push_str(&v.to_string());
                    normalized.push('\n');
                }
                bytes = normalized.into_bytes();
            }
            out.insert(rel, bytes);
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

fn run_small_pipeline(cfg: &ExperimentConfig, root: &Path) -> Result<(), String> {
    let data = root.join("data");
    cmd_synth(cfg, &data).map_err(|e| format!("synth: {e}"))?;
    let base = root.join("base");
    cmd_train(cfg, &data, TrainMode::FinetuneAll, None, &base)
        .map_err(|e| format!("base train: {e}"))?;
    let tuned = root.join("tuned");
    cmd_train(cfg, &data, TrainMode::AdaptersOnly, Some(&base.join("checkpoint")), &tuned)
        .map_err(|e| format!("adapter train: {e}"))?;
    let gen = root.join("gen");
    cmd_generate(cfg, &data, &tuned.join("checkpoint"), GenMode::Adapters, &gen)
        .map_err(|e| format!("generate: {e}"))?;
    cmd_eval(cfg, &data, &gen, &EvalInputs::default(), &root.join("eval"))
        .map_err(|e| format!("eval: {e}"))?;
    Ok(())
}

fn roundtrip_ldt<S: Scalar>(path: &Path, shape: Vec<usize>, rng: &mut DetRng) -> Result<(), String>
where
    S: PartialEq + std::fmt::Debug,
{
    let numel: usize = shape.iter().product();
    let specials = [0.0f64, -0.0, 1e-41, -1e30, 1.0 + f64::EPSILON];
    let data: Vec<S> = (0..numel)
        .map(|k| {
            if k % 7 == 0 {
                S::from_f64(specials[k / 7 % specials.len()])
            } else {
                S::from_f64(rng.normal())
            }
        })
        .collect();
    let tensor = DenseTensor::from_vec(shape, data).map_err(|e| e.to_string())?;
    ldt::save(path, &tensor).map_err(|e| e.to_string())?;
    let back = ldt::load::<S>(path).map_err(|e| e.to_string())?;
    if back.shape() != tensor.shape() {
        return Err(format!("shape changed: {:?} → {:?}", tensor.shape(), back.shape()));
    }
    // Bitwise round trip, including signed zeros and subnormals.
    for (a, b) in tensor.data().iter().zip(back.data()) {
        if a.as_f64().to_bits() != b.as_f64().to_bits() {
            return Err(format!("value changed: {a:?} → {b:?}"));
        }
    }
    Ok(())
}

/// Criterion 8: the whole pipeline is a pure function of (config, seed) —
/// two runs produce byte-identical artifacts (training logs compared modulo
/// wall time) — and LDT tensors round-trip bitwise in both precisions.
fn c8_determinism(root: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 5;
    cfg.dataset.n_videos = 2;
    cfg.dataset.video_duration_s = 2.0;
    cfg.dataset.clip_duration_s = 1.0;
    cfg.dataset.visual_dim = 6;
    cfg.dataset.text_dim = 5;
    cfg.dataset.sync_dim = 4;
    cfg.dataset.latent_dim = 3;
    cfg.conditioning.hidden_dim = 8;
    cfg.conditioning.timestamp_dim = 8;
    cfg.dit = longform_v2a::harness::config::DitSection {
        n_layers: 1,
        hidden_dim: 8,
        n_heads: 2,
        steps: 2,
    };
    cfg.adapters.bottleneck_dim = 4;
    cfg.train.steps = 3;
    cfg.train.adapter_steps = 3;
    cfg.validate().map_err(|e| e.to_string())?;

    let (a, b) = (root.join("c8_a"), root.join("c8_b"));
    run_small_pipeline(&cfg, &a)?;
    run_small_pipeline(&cfg, &b)?;
    let (sa, sb) = (dir_snapshot(&a)?, dir_snapshot(&b)?);
    if sa.keys().ne(sb.keys()) {
        return Err("the two runs produced different artifact sets".into());
    }
    let mut files = 0;
    for (path, bytes) in &sa {
        if sb[path] != *bytes {
            return Err(format!("{path} differs between identical runs"));
        }
        files += 1;
    }

    let mut rng = DetRng::new(31, "c8.ldt");
    for i in 0..50 {
        let rank = 1 + rng.below(3) as usize;
        let shape: Vec<usize> = (0..rank).map(|_| 1 + rng.below(5) as usize).collect();
        let path = root.join(format!("c8_rt_{i}.ldt"));
        if i % 2 == 0 {
            roundtrip_ldt::<f32>(&path, shape, &mut rng)
                .map_err(|e| format!("f32 round trip {i}: {e}"))?;
        } else {
            roundtrip_ldt::<f64>(&path, shape, &mut rng)
                .map_err(|e| format!("f64 round trip {i}: {e}"))?;
        }
    }
    Ok(format!(
        "two pipeline runs byte-identical across {files} artifacts (logs modulo wall time); \
         50/50 LDT round trips bitwise"
    ))
}

/// Criterion 9: 200 adapter-only steps on the frozen base cut the frozen-batch
/// fused loss below the pinned fraction of the unfused base loss.
fn c9_training_effectiveness(data: &Path, root: &Path, seed1_base: Option<PathBuf>) -> Outcome {
    let mut c = ExperimentConfig::default();
    c.seed = 1;
    c.train.adapter_steps = 200;
    let base_ckpt = match seed1_base {
        Some(p) => p,
        None => {
            // Criterion 3 did not leave a seed-1 base behind; train one.
            let base = root.join("c9_base");
            cmd_train(&c, data, TrainMode::FinetuneAll, None, &base)
                .map_err(|e| format!("base train: {e}"))?;
            base.join("checkpoint")
        }
    };
    let tuned = root.join("c9_tuned");
    cmd_train(&c, data, TrainMode::AdaptersOnly, Some(&base_ckpt), &tuned)
        .map_err(|e| format!("adapter train: {e}"))?;

    let (_, vids) = load_dataset::<f32>(data).map_err(|e| e.to_string())?;
    let dataset: Vec<TrainVideo<f32>> = vids.iter().map(|v| v.train_video()).collect();
    let batch = make_eval_batch(&dataset, 32, 999).map_err(|e| e.to_string())?;
    let dit = c.dit_config();
    let cond = c.cond_config();
    let before = load_checkpoint::<f32>(&base_ckpt).map_err(|e| e.to_string())?;
    let after = load_checkpoint::<f32>(&tuned.join("checkpoint")).map_err(|e| e.to_string())?;
    // Zero-initialized adapters make the unfused base loss the fused starting
    // point, so "initial" is the base model on the same frozen batch.
    let initial = eval_fixed_batch(&before, &dit, &cond, &dataset, false, &batch)
        .map_err(|e| e.to_string())?;
    let final_loss = eval_fixed_batch(&after, &dit, &cond, &dataset, true, &batch)
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "frozen batch loss {initial:.4} → {final_loss:.4} after 200 adapter steps \
         (ratio {:.3}, bound {TRAIN_RATIO_BOUND})",
        final_loss / initial
    );
    if final_loss < TRAIN_RATIO_BOUND * initial {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = tmp.path();

    // Committed fixture plus a held-out extension from the same basis.
    let cfg = ExperimentConfig::default();
    let data = root.join("data");
    cmd_synth(&cfg, &data).expect("synth committed fixture");
    let mut hcfg = cfg.clone();
    hcfg.dataset.video_offset = cfg.dataset.n_videos;
    hcfg.dataset.n_videos = 16;
    let heldout = root.join("heldout");
    cmd_synth(&hcfg, &heldout).expect("synth held-out fixture");

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "zero-adapter-identity", c1_zero_adapter_identity(root)));
    results.push((2, "gradient-check", c2_gradient_check()));
    let (c3, seed1_base) = c3_splice_improvement(&data, &heldout, root);
    results.push((3, "splice-improvement", c3));
    results.push((4, "param-budget", c4_param_budget()));
    results.push((5, "metric-oracles", c5_metric_oracles()));
    results.push((6, "crossfade-oracle", c6_crossfade_oracle()));
    results.push((7, "resample-law", c7_resample_law()));
    results.push((8, "determinism", c8_determinism(root)));
    results.push((9, "training-effectiveness", c9_training_effectiveness(&data, root, seed1_base)));

    let mut failures = Vec::new();
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("ACCEPTANCE {n} ({name}): pass — {detail}"),
            Err(detail) => {
                println!("ACCEPTANCE {n} ({name}): FAIL — {detail}");
                failures.push(format!("{n} ({name}): {detail}"));
            }
        }
    }
    assert!(failures.is_empty(), "failed acceptance criteria:\n{}", failures.join("\n"));
}
