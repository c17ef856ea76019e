//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs with `cargo test --test acceptance`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use rand::Rng;
use vbssl::dsp::NoiseBank;
use vbssl::manifest::{stratified_split, Manifest, ManifestEntry, SplitFractions};
use vbssl::metrics::{compute_metrics, Metrics};
use vbssl::model::checkpoint::{self, Checkpoint};
use vbssl::model::{BlockConfig, EntryKind, Mode, Model, ModelConfig};
use vbssl::optim::{lr_at, Schedule};
use vbssl::pipeline::*;
use vbssl::rng::RandomStream;
use vbssl::synth::{tone_dataset, ToneSpec};
use vbssl::vicreg::{vicreg_total, LossBreakdown, VicregWeights};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> RandomStream {
    RandomStream::lane(seed, 0, 0, 0)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------------------
// 1. Loss against an independent double-loop oracle.

fn naive_vicreg(za: &[Vec<f64>], zb: &[Vec<f64>], w: &VicregWeights) -> LossBreakdown {
    let n = za.len();
    let d = za[0].len();
    let mut inv = 0.0;
    for i in 0..n {
        let mut sq = 0.0;
        for j in 0..d {
            sq += (za[i][j] - zb[i][j]).powi(2);
        }
        inv += sq;
    }
    inv /= n as f64;

    let var = |z: &[Vec<f64>]| {
        let mut total = 0.0;
        for j in 0..d {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let v = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            total += f64::max(0.0, w.gamma - (v + w.epsilon).sqrt());
        }
        total / d as f64
    };
    let cov = |z: &[Vec<f64>]| {
        let means: Vec<f64> = (0..d).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let mut total = 0.0;
        for k in 0..d {
            for l in 0..d {
                if k == l {
                    continue;
                }
                let mut c = 0.0;
                for row in z {
                    c += (row[k] - means[k]) * (row[l] - means[l]);
                }
                c /= n as f64 - 1.0;
                total += c * c;
            }
        }
        total / d as f64
    };
    let (va, vb, ca, cb) = (var(za), var(zb), cov(za), cov(zb));
    LossBreakdown {
        invariance: inv,
        variance_a: va,
        variance_b: vb,
        covariance_a: ca,
        covariance_b: cb,
        total: w.lambda * inv + w.mu * (va + vb) + w.nu * (ca + cb),
    }
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(2..=8);
        let d = r.gen_range(2..=16);
        let scale = r.gen_range(0.1..3.0);
        let mut draw = || (0..n).map(|_| (0..d).map(|_| r.gen_range(-scale..scale)).collect::<Vec<f64>>()).collect::<Vec<_>>();
        let (a, b) = (draw(), draw());
        let w = VicregWeights::default();
        let to_arr = |z: &Vec<Vec<f64>>| Array2::from_shape_fn((n, d), |(i, j)| z[i][j]);
        let got = vicreg_total(to_arr(&a).view(), to_arr(&b).view(), &w).map_err(|e| e.to_string())?;
        let want = naive_vicreg(&a, &b, &w);
        for (g, o) in [
            (got.invariance, want.invariance),
            (got.variance_a, want.variance_a),
            (got.variance_b, want.variance_b),
            (got.covariance_a, want.covariance_a),
            (got.covariance_b, want.covariance_b),
            (got.total, want.total),
        ] {
            worst = worst.max(rel(g, o));
        }
    }
    check(worst <= 1e-10, format!("100 instances, worst relative error {worst:.2e} (tol 1e-10)"))
}

// ---------------------------------------------------------------------------
// 2. Collapse value.

fn criterion_2() -> Outcome {
    let z = Array2::<f64>::zeros((2, 2));
    let l = vicreg_total(z.view(), z.view(), &VicregWeights::default()).map_err(|e| e.to_string())?;
    // Each column std is sqrt(eps) = 0.01, so each hinge is 0.99: 25 * 2 * 0.99.
    check((l.total - 49.5).abs() <= 1e-9, format!("total {:.12} (expected 49.5 +- 1e-9)", l.total))
}

// ---------------------------------------------------------------------------
// 3. Gradients against central finite differences.

const FD_STEP: f64 = 1e-5;

fn tiny_config(classes: usize) -> ModelConfig {
    ModelConfig {
        input_shape: (9, 8),
        encoder_blocks: vec![BlockConfig { channels: 4, stride: 2, groups: 1 }, BlockConfig { channels: 8, stride: 2, groups: 2 }],
        encoder_out_dim: 8,
        projector_hidden_layers: 1,
        projector_dim: 12,
        num_classes: classes,
        ..ModelConfig::default()
    }
}

fn random_views(n: usize, shape: (usize, usize), seed: u64) -> Array3<f64> {
    let mut r = rng(seed);
    Array3::from_shape_fn((n, shape.0, shape.1), |_| r.gen_range(0.0..1.0))
}

/// Worst `|a - fd| / max(|a|, |fd|, floor)` over all trainable values, with a
/// floor at the finite-difference roundoff scale `1e-6 * max(1, |L|)`.
fn worst_fd_error(model: &Model, grads: &vbssl::model::Gradients, loss: &dyn Fn(&Model) -> f64) -> (f64, usize) {
    let floor = 1e-6 * loss(model).abs().max(1.0);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (idx, e) in model.params.entries().iter().enumerate() {
        if e.kind == EntryKind::Buffer {
            continue;
        }
        for j in 0..e.values.len() {
            let mut m = model.clone();
            m.params.values_at_mut(idx)[j] = e.values[j] + FD_STEP;
            let up = loss(&m);
            m.params.values_at_mut(idx)[j] = e.values[j] - FD_STEP;
            let down = loss(&m);
            let fd = (up - down) / (2.0 * FD_STEP);
            let a = grads.at(idx)[j];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(floor));
            count += 1;
        }
    }
    (worst, count)
}

fn criterion_3() -> Outcome {
    let w = VicregWeights::default();
    let mut worst_ssl = 0.0f64;
    let mut worst_sup = 0.0f64;
    let mut sizes = BTreeSet::new();
    for inst in 0..10u64 {
        let ssl = Model::new(tiny_config(0), inst).unwrap();
        sizes.insert(ssl.params.entries().iter().filter(|e| e.kind != EntryKind::Buffer).map(|e| e.values.len()).sum::<usize>());
        let (a, b) = (random_views(4, (9, 8), 100 + inst), random_views(4, (9, 8), 200 + inst));
        let (_, grads) = ssl.clone().ssl_loss_and_grads(&a, &b, &w).map_err(|e| e.to_string())?;
        let loss = |m: &Model| m.clone().ssl_loss_and_grads(&a, &b, &w).unwrap().0.total;
        worst_ssl = worst_ssl.max(worst_fd_error(&ssl, &grads, &loss).0);

        let sup = Model::new(tiny_config(3).for_downstream(3), 50 + inst).unwrap();
        sizes.insert(sup.params.entries().iter().filter(|e| e.kind != EntryKind::Buffer).map(|e| e.values.len()).sum::<usize>());
        let x = random_views(5, (9, 8), 300 + inst);
        let labels: Vec<usize> = (0..5).map(|i| (i + inst as usize) % 3).collect();
        let (_, grads) = sup.clone().supervised_loss_and_grads(&x, &labels, false).map_err(|e| e.to_string())?;
        let loss = |m: &Model| m.clone().supervised_loss_and_grads(&x, &labels, false).unwrap().0;
        worst_sup = worst_sup.max(worst_fd_error(&sup, &grads, &loss).0);
    }
    let max_size = *sizes.iter().max().unwrap();
    check(
        worst_ssl <= 1e-4 && worst_sup <= 1e-4 && max_size <= 5000,
        format!("10 instances each, {max_size} params max; worst rel error ssl {worst_ssl:.2e}, supervised {worst_sup:.2e} (tol 1e-4)"),
    )
}

// ---------------------------------------------------------------------------
// 4 and 5. Desk-scale pretraining.

/// Encoder and projector used for the desk-scale training criteria.
fn desk_model(projector_dim: usize, classes: usize) -> ModelConfig {
    ModelConfig {
        encoder_blocks: vec![
            BlockConfig { channels: 8, stride: 2, groups: 1 },
            BlockConfig { channels: 16, stride: 2, groups: 4 },
            BlockConfig { channels: 32, stride: 2, groups: 4 },
            BlockConfig { channels: 64, stride: 2, groups: 8 },
        ],
        encoder_out_dim: 64,
        projector_hidden_layers: 2,
        projector_dim,
        num_classes: classes,
        ..ModelConfig::default()
    }
}

/// 200 optimizer steps: 200 clips, batch 8, 8 epochs with 1 warmup epoch.
fn desk_pretrain_config(weights: VicregWeights, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::defaults(RunMode::Pretrain);
    cfg.model = desk_model(DESK_PROJECTOR_DIM, 0);
    cfg.batch_size = 8;
    cfg.epochs = 8;
    cfg.schedule = Schedule { warmup_epochs: 1, total_epochs: 8, lr_peak: DESK_LR_PEAK, ..cfg.schedule };
    cfg.vicreg = weights;
    cfg.seed = seed;
    cfg
}

const DESK_PROJECTOR_DIM: usize = 2;
const DESK_LR_PEAK: f64 = 0.002;
const DESK_CLASSES: usize = 4;

fn pretrain_corpus(seed: u64) -> Vec<vbssl::audio::AudioClip> {
    let spec = ToneSpec { classes: DESK_CLASSES, per_class: 200 / DESK_CLASSES + 1, ..ToneSpec::default() };
    let mut clips: Vec<_> = tone_dataset(&spec, seed).unwrap().into_iter().map(|(c, _)| c).collect();
    clips.truncate(200);
    clips
}

/// Epoch-0 augmented views of every clip, as seen by the objective.
fn augmented_views(cfg: &RunConfig, clips: &[vbssl::audio::AudioClip]) -> Array3<f64> {
    let views: Vec<_> = clips.iter().enumerate().map(|(i, c)| view_pair(cfg, c, &NoiseBank::default(), 0, i).unwrap()[0].0.clone()).collect();
    stack(&views.iter().collect::<Vec<_>>())
}

fn criterion_4() -> Outcome {
    let clips = pretrain_corpus(11);
    let mut stds = Vec::new();
    let mut steps = Vec::new();
    for w in [VicregWeights { mu: 0.0, nu: 0.0, ..VicregWeights::default() }, VicregWeights::default()] {
        let cfg = desk_pretrain_config(w, 3);
        let (ckpt, report) = pretrain_clips(&cfg, &clips, &NoiseBank::default()).map_err(|e| e.to_string())?;
        let views = augmented_views(&cfg, &clips);
        stds.push(embedding_std(&ckpt.model, &views).map_err(|e| e.to_string())?);
        steps.push(report.total_steps);
    }
    check(
        steps == [200, 200] && stds[0] < 0.05 && stds[1] >= 0.5,
        format!(
            "{} clips, {:?} steps, d={DESK_PROJECTOR_DIM}: std without variance/covariance {:.4} (need < 0.05), with paper weights {:.4} (need >= 0.5)",
            clips.len(),
            steps,
            stds[0],
            stds[1]
        ),
    )
}

fn probe_accuracy(encoder_source: &Checkpoint, data: &DownstreamData, seed: u64) -> Result<f64, String> {
    let mut cfg = RunConfig::defaults(RunMode::Probe);
    cfg.model = desk_model(0, data.classes.len());
    cfg.init_checkpoint = Some("in-memory".into());
    cfg.batch_size = 8;
    cfg.epochs = 200;
    cfg.schedule = Schedule { warmup_epochs: 20, total_epochs: 200, ..cfg.schedule };
    cfg.seed = seed;
    let (_, report) = train_downstream_on(&cfg, data, Some(encoder_source)).map_err(|e| e.to_string())?;
    Ok(report.test.expect("non-empty test split").accuracy)
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = ToneSpec { classes: 4, per_class: 200, ..ToneSpec::default() };
    let path = vbssl::synth::write_tone_dataset(dir.path(), &spec, 21).map_err(|e| e.to_string())?;
    let manifest = Manifest::read(&path).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for seed in 0..3u64 {
        let split = stratified_split(&manifest, SplitFractions::default(), 0.1, seed).map_err(|e| e.to_string())?;
        let aug = RunConfig::defaults(RunMode::Probe).augment;
        let classes = manifest.labels();
        let load = |m: &Manifest| load_labeled(m, &path, &classes, 1.0, &aug).map_err(|e| e.to_string());
        let data = DownstreamData {
            train: load(&split.train_mini)?,
            validation: LabeledViews { views: vec![], labels: vec![] },
            test: load(&split.test)?,
            classes: classes.clone(),
        };
        let cfg = desk_pretrain_config(VicregWeights::default(), 100 + seed);
        let (ssl, _) = pretrain_clips(&cfg, &pretrain_corpus(31 + seed), &NoiseBank::default()).map_err(|e| e.to_string())?;
        let random = Checkpoint { model: Model::new(cfg.model.for_pretraining(), 100 + seed).unwrap(), seed, epoch: 0, labels: vec![] };
        let a = probe_accuracy(&ssl, &data, seed)?;
        let b = probe_accuracy(&random, &data, seed)?;
        detail.push(format!("seed {seed}: ssl {a:.3} random {b:.3} ({} labeled)", data.train.len()));
        gaps.push(a - b);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    check(mean_gap >= 0.10, format!("mean gap {:.1} points (need >= 10); {}", 100.0 * mean_gap, detail.join("; ")))
}

// ---------------------------------------------------------------------------
// 6. STFT shape and tone localization.

fn criterion_6() -> Outcome {
    let sr = 32000u32;
    let x: Vec<f32> = (0..sr).map(|i| (std::f64::consts::TAU * 400.0 * i as f64 / sr as f64).sin() as f32).collect();
    let clip = vbssl::audio::AudioClip::new(x, sr).unwrap();
    let spec = vbssl::dsp::stft(&clip, 800, 320).map_err(|e| e.to_string())?;
    let (bins, frames) = (spec.bins(), spec.frames());
    let off_peak = (0..frames)
        .filter(|&t| {
            let col: Vec<f64> = spec.values.column(t).iter().map(|c| c.norm()).collect();
            vbssl::metrics::argmax(&col) != 10
        })
        .count();
    check(
        (bins, frames) == (401, 98) && off_peak == 0,
        format!("shape {bins} x {frames} (expected 401 x 98), {off_peak} frames peak away from bin 10"),
    )
}

// ---------------------------------------------------------------------------
// 7. Schedule endpoints.

fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, s, want) in [("pretrain", Schedule::pretrain(7), [1e-4, 0.3, 1e-4]), ("downstream", Schedule::downstream(7), [1e-5, 1e-3, 1e-5])] {
        let got = [lr_at(&s, 0), lr_at(&s, s.warmup_steps()), lr_at(&s, s.total_steps())];
        let got: Vec<f64> = got.into_iter().collect::<vbssl::Result<_>>().map_err(|e| e.to_string())?;
        ok &= got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-12);
        lines.push(format!("{name} {got:?}"));
    }
    check(ok, lines.join(", "))
}

// ---------------------------------------------------------------------------
// 8. Metrics against a brute-force oracle.

fn oracle_metrics(labels: &[usize], logits: &Array2<f64>) -> (f64, f64, f64, f64, f64) {
    let (n, k) = logits.dim();
    let mut preds = Vec::new();
    let mut top3 = 0;
    for i in 0..n {
        let mut order: Vec<usize> = (0..k).collect();
        // Stable sort on descending value keeps lower indices first among ties.
        order.sort_by(|&a, &b| logits[[i, b]].partial_cmp(&logits[[i, a]]).unwrap());
        preds.push(order[0]);
        if order.iter().take(3).any(|&c| c == labels[i]) {
            top3 += 1;
        }
    }
    let mut cm = vec![vec![0u64; k]; k];
    for i in 0..n {
        cm[labels[i]][preds[i]] += 1;
    }
    let correct: u64 = (0..k).map(|c| cm[c][c]).sum();
    let (mut p_sum, mut r_sum, mut f_sum, mut present) = (0.0, 0.0, 0.0, 0);
    for c in 0..k {
        let row: u64 = cm[c].iter().sum();
        let col: u64 = (0..k).map(|r| cm[r][c]).sum();
        if row + col == 0 {
            continue;
        }
        present += 1;
        let tp = cm[c][c] as f64;
        let p = if col == 0 { 0.0 } else { tp / col as f64 };
        let r = if row == 0 { 0.0 } else { tp / row as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        p_sum += p;
        r_sum += r;
        f_sum += f;
    }
    let m = present as f64;
    (correct as f64 / n as f64, top3 as f64 / n as f64, f_sum / m, p_sum / m, r_sum / m)
}

fn criterion_8() -> Outcome {
    let mut r = rng(8);
    let mut mismatches = 0;
    let mut top3_violations = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..=200);
        let k = r.gen_range(1..=20);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        // Coarse integer logits make ties common.
        let logits = Array2::from_shape_fn((n, k), |_| f64::from(r.gen_range(-3i32..=3)));
        let m: Metrics = compute_metrics(&labels, &logits).map_err(|e| e.to_string())?;
        let o = oracle_metrics(&labels, &logits);
        if (m.accuracy, m.top3_accuracy, m.f1_macro, m.precision_macro, m.recall_macro) != o {
            mismatches += 1;
        }
        if m.top3_accuracy < m.accuracy {
            top3_violations += 1;
        }
    }
    check(
        mismatches == 0 && top3_violations == 0,
        format!("1000 instances: {mismatches} mismatches, {top3_violations} top3 < accuracy"),
    )
}

// ---------------------------------------------------------------------------
// 9. Stratified split.

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let mut worst_dev = 0.0f64;
    let mut failures = Vec::new();
    for case in 0..50 {
        let classes = r.gen_range(1..=8);
        let mut entries = Vec::new();
        for c in 0..classes {
            for i in 0..r.gen_range(1..=60) {
                entries.push(ManifestEntry { path: format!("c{c}/{i}.wav"), label: format!("class{c}"), duration_s: 1.0, sample_rate: 32000 });
            }
        }
        let m = Manifest::new(entries).unwrap();
        let seed = r.gen();
        let split = stratified_split(&m, SplitFractions::default(), 0.1, seed).map_err(|e| e.to_string())?;
        if split != stratified_split(&m, SplitFractions::default(), 0.1, seed).unwrap() {
            failures.push(format!("case {case}: not deterministic"));
        }
        for c in 0..classes {
            let label = format!("class{c}");
            let count = |m: &Manifest| m.entries.iter().filter(|e| e.label == label).count();
            let total = count(&m) as f64;
            for (got, frac) in [(count(&split.train), 0.1), (count(&split.validation), 0.1), (count(&split.test), 0.8)] {
                worst_dev = worst_dev.max((got as f64 - frac * total).abs());
            }
        }
        let paths = |m: &Manifest| m.entries.iter().map(|e| e.path.clone()).collect::<Vec<_>>();
        let (tr, va, te) = (paths(&split.train), paths(&split.validation), paths(&split.test));
        let union: BTreeSet<_> = tr.iter().chain(&va).chain(&te).cloned().collect();
        if union.len() != tr.len() + va.len() + te.len() || union != paths(&m).into_iter().collect() {
            failures.push(format!("case {case}: splits overlap or miss entries"));
        }
        if !paths(&split.train_mini).iter().all(|p| tr.contains(p)) {
            failures.push(format!("case {case}: mini split not inside train"));
        }
    }
    check(
        worst_dev <= 1.0 && failures.is_empty(),
        format!("50 manifests: worst per-class deviation {worst_dev:.2} (tol 1); {}", if failures.is_empty() { "disjoint, covering, deterministic".into() } else { failures.join("; ") }),
    )
}

// ---------------------------------------------------------------------------
// 10. Checkpoint round trip.

fn criterion_10() -> Outcome {
    let mut model = Model::new(tiny_config(0), 4).unwrap();
    let (a, b) = (random_views(6, (9, 8), 1), random_views(6, (9, 8), 2));
    // One training step so the normalization buffers hold non-initial values.
    let (_, grads) = model.ssl_loss_and_grads(&a, &b, &VicregWeights::default()).map_err(|e| e.to_string())?;
    let opt = vbssl::optim::OptimizerConfig::sgd();
    let mut state = vbssl::optim::OptState::new(&model.params);
    opt.step(&mut model.params, &grads, &mut state, 0.01).map_err(|e| e.to_string())?;
    model.params.round_to_f32();

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.ckpt");
    let ckpt = Checkpoint { model: model.clone(), seed: 4, epoch: 1, labels: vec![] };
    checkpoint::save(&path, &ckpt).map_err(|e| e.to_string())?;
    let back = checkpoint::load(&path).map_err(|e| e.to_string())?;

    let bits = |m: &Model| m.params.entries().iter().flat_map(|e| e.values.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    let same_params = bits(&model) == bits(&back.model) && model.params.entries().len() == back.model.params.entries().len();
    let buffers = model.params.entries().iter().filter(|e| e.kind == EntryKind::Buffer).count();
    let fwd = |m: &Model| {
        let mut m = m.clone();
        let f = m.encoder_forward(&a, Mode::Eval).unwrap();
        m.projector_forward(&f, Mode::Eval).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    let same_fwd = fwd(&model) == fwd(&back.model);
    check(same_params && same_fwd, format!("{} entries ({buffers} buffers) bit-exact: {same_params}; forward bit-exact: {same_fwd}", model.params.entries().len()))
}

// ---------------------------------------------------------------------------
// 11. Probe freeze.

fn criterion_11() -> Outcome {
    let spec = ToneSpec { classes: 3, per_class: 6, duration_s: 1.2, ..ToneSpec::default() };
    let clips = tone_dataset(&spec, 5).map_err(|e| e.to_string())?;
    let names: Vec<String> = vbssl::synth::CLASS_NAMES[..3].iter().map(|s| s.to_string()).collect();
    let aug = RunConfig::defaults(RunMode::Probe).augment;
    let all_clips: Vec<_> = clips.iter().map(|(c, _)| c.clone()).collect();
    let labels: Vec<String> = clips.iter().map(|(_, y)| names[*y].clone()).collect();
    let views = labeled_views(&all_clips, &labels, &names, 1.0, &aug).map_err(|e| e.to_string())?;
    let data = DownstreamData { train: views.clone(), validation: views.clone(), test: views, classes: names };

    let cfg = desk_pretrain_config(VicregWeights::default(), 1);
    let mut cfg_small = cfg.clone();
    cfg_small.epochs = 1;
    let (pre, _) = pretrain_clips(&cfg_small, &all_clips, &NoiseBank::default()).map_err(|e| e.to_string())?;

    let mut probe = RunConfig::defaults(RunMode::Probe);
    probe.model = desk_model(0, 3);
    probe.init_checkpoint = Some("in-memory".into());
    probe.batch_size = 4;
    probe.epochs = 3;
    let (trained, report) = train_downstream_on(&probe, &data, Some(&pre)).map_err(|e| e.to_string())?;

    let encoder_bytes = |m: &Model| {
        m.params
            .entries()
            .iter()
            .filter(|e| e.name.starts_with("encoder."))
            .map(|e| (e.name.clone(), e.values.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()))
            .collect::<Vec<_>>()
    };
    let before = encoder_bytes(&pre.model);
    let after = encoder_bytes(&trained.model);
    let buffers = trained.model.params.entries().iter().filter(|e| e.name.starts_with("encoder.") && e.kind == EntryKind::Buffer).count();
    let head_changed = trained.model.params.get("classifier.weight") != Model::new(trained.model.config.clone(), probe.seed).unwrap().params.get("classifier.weight");
    check(
        before == after && buffers > 0 && head_changed,
        format!(
            "{} encoder entries ({buffers} buffers) byte-identical: {}; classifier trained: {head_changed}; {} steps",
            before.len(),
            before == after,
            report.total_steps
        ),
    )
}

// ---------------------------------------------------------------------------
// 12. Aggregation.

fn report_with_accuracy(seed: u64, acc: f64) -> RunReport {
    RunReport {
        mode: RunMode::Probe,
        seed,
        config_digest: "fixed".into(),
        total_steps: 1,
        epochs: vec![],
        test: Some(Metrics { accuracy: acc, top3_accuracy: 1.0, f1_macro: acc, precision_macro: acc, recall_macro: acc, confusion: vec![] }),
        timing: Timing { started_unix_s: 0.0, wall_clock_s: 0.0 },
    }
}

fn criterion_12() -> Outcome {
    let two = aggregate_runs(&[report_with_accuracy(0, 0.5), report_with_accuracy(1, 0.7)]).map_err(|e| e.to_string())?;
    let five: Vec<_> = [0.5, 0.6, 0.7, 0.8, 0.9].iter().enumerate().map(|(i, &a)| report_with_accuracy(i as u64, a)).collect();
    let five = aggregate_runs(&five).map_err(|e| e.to_string())?;
    let a2 = two.metrics["accuracy"];
    let a5 = five.metrics["f1_macro"];
    // Hand-computed: {0.5, 0.7} -> 0.6 +- sqrt(0.02); {0.5..0.9} -> 0.7 +- sqrt(0.1 / 4).
    let ok = (a2.mean - 0.6).abs() <= 1e-12
        && (a2.std - 0.141_421_356_237_309_5).abs() <= 1e-12
        && (a5.mean - 0.7).abs() <= 1e-12
        && (a5.std - 0.158_113_883_008_418_97).abs() <= 1e-12
        && five.metrics["top3_accuracy"].std == 0.0;
    check(ok, format!("2 runs {:.12} +- {:.12}; 5 runs {:.12} +- {:.12}", a2.mean, a2.std, a5.mean, a5.std))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 12] = [
        (1, "loss matches naive oracle", Duration::from_secs(5), criterion_1),
        (2, "collapse value 49.5", Duration::from_secs(1), criterion_2),
        (3, "gradients match finite differences", Duration::from_secs(120), criterion_3),
        (4, "variance term prevents collapse", Duration::from_secs(600), criterion_4),
        (5, "SSL probe beats random-encoder probe", Duration::from_secs(1800), criterion_5),
        (6, "STFT shape and tone bin", Duration::from_secs(1), criterion_6),
        (7, "schedule endpoints", Duration::from_secs(1), criterion_7),
        (8, "metrics match brute-force oracle", Duration::from_secs(10), criterion_8),
        (9, "stratified split", Duration::from_secs(5), criterion_9),
        (10, "checkpoint round trip", Duration::from_secs(5), criterion_10),
        (11, "probe leaves encoder untouched", Duration::from_secs(120), criterion_11),
        (12, "run aggregation", Duration::from_secs(1), criterion_12),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", budget.as_secs())),
            Err(d) => (false, d),
        };
        println!("{} criterion {id:>2} ({name}): {detail} [{:.1}s]", if pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
