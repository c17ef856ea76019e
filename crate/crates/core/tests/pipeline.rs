mod common;

use common::*;
use vbssl::dsp::NoiseBank;
use vbssl::manifest::{stratified_split, Manifest, SplitFractions};
use vbssl::pipeline::*;
use vbssl::synth::tone_dataset;

fn pretrain_cfg() -> RunConfig {
    RunConfig::from_json(config_json("pretrain", 0), &[]).unwrap()
}

fn tone_clips(n_per_class: usize) -> Vec<vbssl::audio::AudioClip> {
    tone_dataset(&tone_spec(2, n_per_class), 3).unwrap().into_iter().map(|(c, _)| c).collect()
}

#[test]
fn toy_pretraining_takes_the_expected_steps() {
    let cfg = pretrain_cfg();
    let (ckpt, report) = pretrain_clips(&cfg, &tone_clips(10), &NoiseBank::default()).unwrap();
    assert_eq!(report.total_steps, 10);
    assert_eq!(report.epochs.len(), 2);
    assert!(report.epochs.iter().all(|e| e.loss.is_finite() && e.steps == 5));
    assert!(ckpt.labels.is_empty());
    assert!(ckpt.model.params.entries().iter().all(|e| e.values.iter().all(|v| *v as f32 as f64 == *v)));
}

#[test]
fn remainder_batch_of_one_is_dropped() {
    let mut cfg = pretrain_cfg();
    cfg.epochs = 1;
    let (_, report) = pretrain_clips(&cfg, &tone_clips(3)[..5], &NoiseBank::default()).unwrap();
    assert_eq!(report.total_steps, 1);
    assert_eq!(pretrain_steps_per_epoch(5, 4), 1);
    assert_eq!(pretrain_steps_per_epoch(6, 4), 2);
}

#[test]
fn pretraining_is_deterministic_and_seed_sensitive() {
    let clips = tone_clips(4);
    let cfg = pretrain_cfg();
    let a = pretrain_clips(&cfg, &clips, &NoiseBank::default()).unwrap();
    let b = pretrain_clips(&cfg, &clips, &NoiseBank::default()).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.reproducible_json(), b.1.reproducible_json());
    let c = pretrain_clips(&RunConfig { seed: 6, ..cfg }, &clips, &NoiseBank::default()).unwrap();
    assert_ne!(a.0.model.params, c.0.model.params);
    assert_eq!(a.1.config_digest, c.1.config_digest);
}

fn downstream_data(classes: usize, per_class: usize) -> DownstreamData {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tones(dir.path(), classes, per_class, 2);
    let m = Manifest::read(&path).unwrap();
    let split = stratified_split(&m, SplitFractions { train: 0.5, validation: 0.25, test: 0.25 }, 0.1, 0).unwrap();
    let cfg = RunConfig::from_json(config_json("scratch", classes), &[]).unwrap();
    let mut names = m.labels();
    names.sort();
    let load = |m: &Manifest| load_labeled(m, &path, &names, cfg.window_s, &cfg.augment).unwrap();
    DownstreamData { train: load(&split.train), validation: load(&split.validation), test: load(&split.test), classes: names }
}

#[test]
fn probe_leaves_encoder_untouched_and_finetune_moves_it() {
    let data = downstream_data(2, 8);
    let (pre, _) = pretrain_clips(&pretrain_cfg(), &tone_clips(4), &NoiseBank::default()).unwrap();

    let mut probe = RunConfig::from_json(config_json("probe", 2), &[("init_checkpoint".into(), "\"unused\"".into())]).unwrap();
    probe.epochs = 2;
    let (ck, report) = train_downstream_on(&probe, &data, Some(&pre)).unwrap();
    assert_eq!(report.total_steps, 2 * data.train.len().div_ceil(4));
    assert!(report.test.is_some());
    for e in ck.model.params.entries().iter().filter(|e| e.name.starts_with("encoder.")) {
        let before = pre.model.params.get(&e.name);
        let same = e.values.iter().zip(before).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "{} changed during probing", e.name);
    }

    let finetune = RunConfig { mode: RunMode::Finetune, ..probe };
    let (ft, _) = train_downstream_on(&finetune, &data, Some(&pre)).unwrap();
    let moved = ft
        .model
        .params
        .entries()
        .iter()
        .filter(|e| e.name.starts_with("encoder."))
        .any(|e| e.values != pre.model.params.get(&e.name));
    assert!(moved);
}

#[test]
fn class_count_must_match_model() {
    let data = downstream_data(2, 4);
    let cfg = RunConfig::from_json(config_json("scratch", 3), &[]).unwrap();
    assert!(matches!(train_downstream_on(&cfg, &data, None), Err(vbssl::Error::LabelMismatch(_))));
}

#[test]
fn checkpoint_carries_labels_for_evaluation() {
    let data = downstream_data(2, 4);
    let cfg = RunConfig::from_json(config_json("scratch", 2), &[]).unwrap();
    let (ck, report) = train_downstream_on(&cfg, &data, None).unwrap();
    assert_eq!(ck.labels, data.classes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    vbssl::model::checkpoint::save(&path, &ck).unwrap();
    let back = vbssl::model::checkpoint::load(&path).unwrap();
    assert_eq!(evaluate(&back.model, &data.test, 3).unwrap(), report.test.unwrap());
}
