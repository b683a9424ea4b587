use super::*;
use crate::autodiff::AdamConfig;
use crate::model::{build_model, ModelConfig};
use crate::signal::{
    generate_dataset, ChannelConfig, EmitterProfile, ModulationKind, ModulationScheme, SplitRole, SynthConfig,
};

fn small_model(classes: usize) -> ModelConfig {
    ModelConfig {
        block_channels: vec![4, 8],
        block_strides: vec![2, 2],
        embedding_dim: 16,
        hidden_width: 16,
        class_count: classes,
        ..ModelConfig::default()
    }
}

/// Two emitters whose gains differ by a factor of three.
fn toy(kind: ModulationKind, frames: usize, data_seed: u64) -> DatasetManifest {
    let fleet = vec![
        EmitterProfile {
            amp_offset: 0.5,
            ..EmitterProfile::identity(0)
        },
        EmitterProfile {
            amp_offset: 1.5,
            cfo_hz: 3000.0,
            ..EmitterProfile::identity(1)
        },
    ];
    generate_dataset(
        &fleet,
        &[ModulationScheme::standard(kind)],
        frames,
        &ChannelConfig::default(),
        data_seed,
        &SynthConfig::default(),
    )
    .unwrap()
}

fn cfg(pre: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        pretrain_epochs: pre,
        epochs,
        batch_size: 8,
        seed: 5,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn zero_pretrain_epochs_only_copies_heads() {
    let mut m = build_model(&small_model(2), 1, AdamConfig::default()).unwrap();
    let f = m.head_params(Head::Main)[3];
    m.store.get_mut(f).value.fill(0.5);
    let before = m.store.clone();
    pretrain(&mut m, &toy(ModulationKind::Qpsk, 4, 1), &cfg(0, 0)).unwrap();
    for (id, p) in m.store.iter() {
        if m.is_adversarial_param(id) {
            continue;
        }
        assert_eq!(p.value, before.get(id).value);
    }
    let fp = m.head_params(Head::Adversarial)[3];
    assert!(m.store.get(fp).value.data().iter().all(|&v| v == 0.5));
}

#[test]
fn pretraining_separates_toy_emitters() {
    let ds = toy(ModulationKind::Qpsk, 40, 2);
    let mut m = build_model(&small_model(2), 2, AdamConfig::default()).unwrap();
    let log = pretrain(&mut m, &ds, &cfg(12, 0)).unwrap();
    let acc = log.final_train_accuracy.unwrap();
    assert!(acc >= 99.0, "toy accuracy {acc}");
    let pred = predict(&m, &ds.frames).unwrap();
    let labels = ds.labels().unwrap();
    let direct = 100.0 * pred.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    assert_eq!(direct, acc);

    // cross-entropy trends down; the last 10% of epochs may wobble
    let ce: Vec<f64> = log.epochs.iter().map(|r| r.mean_ce).collect();
    let stable = ce.len() - ce.len().div_ceil(10);
    for w in ce[..stable].windows(2) {
        assert!(w[1] <= w[0] * 1.02, "{ce:?}");
    }
    assert!(ce.last().unwrap() < &ce[0]);
}

#[test]
fn pretraining_is_deterministic() {
    let ds = toy(ModulationKind::Bpsk, 6, 3);
    let run = || {
        let mut m = build_model(&small_model(2), 3, AdamConfig::default()).unwrap();
        let log = pretrain(&mut m, &ds, &cfg(2, 0)).unwrap();
        (m.to_bytes().unwrap(), log.epochs_csv())
    };
    assert_eq!(run(), run());
}

#[test]
fn unlabeled_source_rejected() {
    let ds = toy(ModulationKind::Bpsk, 2, 4).into_unlabeled_train();
    let mut m = build_model(&small_model(2), 4, AdamConfig::default()).unwrap();
    assert!(matches!(pretrain(&mut m, &ds, &cfg(1, 0)), Err(Error::UnlabeledSource)));
}

#[test]
fn labeled_target_rejected() {
    let src = toy(ModulationKind::Qam16, 3, 5);
    let mut tgt = toy(ModulationKind::Qfsk, 3, 6).into_unlabeled_train();
    tgt.frames[2].label = Some(1);
    let mut m = build_model(&small_model(2), 5, AdamConfig::default()).unwrap();
    assert!(matches!(train_mdd(&mut m, &src, &tgt, &cfg(0, 1), None), Err(Error::TargetLabelsPresent)));
}

#[test]
fn schedules_cover_and_pair() {
    let s = mdd_schedule(10, 4, 3, 9, 0);
    assert_eq!(s.len(), 4);
    let mut seen: Vec<usize> = s.iter().flat_map(|(a, _)| a.clone()).collect();
    seen.sort();
    assert_eq!(seen, (0..10).collect::<Vec<_>>());
    for (a, b) in &s {
        assert_eq!(a.len(), b.len());
        assert!(b.iter().all(|&i| i < 4));
    }
    let p = pretrain_schedule(10, 4, 9, 1);
    assert_eq!(p.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
    assert_ne!(pretrain_schedule(10, 4, 9, 1), pretrain_schedule(10, 4, 9, 2));
}

#[test]
fn loss_log_has_one_row_per_step() {
    let src = toy(ModulationKind::Qam16, 9, 7);
    let tgt = toy(ModulationKind::Qfsk, 5, 8).into_unlabeled_train();
    let mut m = build_model(&small_model(2), 6, AdamConfig::default()).unwrap();
    let c = cfg(0, 3);
    let log = train_mdd(&mut m, &src, &tgt, &c, None).unwrap();
    assert_eq!(log.losses.len(), 3 * 18usize.div_ceil(8));
    assert_eq!(log.losses_csv().lines().count(), log.losses.len() + 1);
    assert!(log.losses_csv().starts_with("epoch,step,ce,source_disparity,target_disparity,mdd,total\n"));
}

#[test]
fn lambda_zero_matches_source_only_continuation() {
    let src = toy(ModulationKind::Qam16, 6, 9);
    let tgt = toy(ModulationKind::Qfsk, 4, 10).into_unlabeled_train();
    let mut c = cfg(1, 2);
    c.mdd.lambda = 0.0;
    let mut a = build_model(&small_model(2), 7, AdamConfig { lr: 3e-3, ..AdamConfig::default() }).unwrap();
    pretrain(&mut a, &src, &c).unwrap();
    let mut b = a.clone();
    train_mdd(&mut a, &src, &tgt, &c, None).unwrap();

    let labels = src.labels().unwrap();
    for epoch in 0..c.epochs {
        for (si, _) in mdd_schedule(src.len(), tgt.len(), c.batch_size, c.seed, epoch) {
            let y: Vec<usize> = si.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let x = tape.constant(batch_tensor(&gather(&src.frames, &si), &b.config).unwrap()).unwrap();
            let e = b.extract_on(&mut tape, x).unwrap();
            let l = b.classify_on(&mut tape, e, Head::Main, None).unwrap();
            let ce = mdd::record_cross_entropy(&mut tape, l, &y).unwrap();
            b.store.zero_grad();
            tape.backward(ce, &mut b.store).unwrap();
            b.adam.step(&mut b.store).unwrap();
        }
    }
    for (id, p) in a.store.iter() {
        if !a.is_adversarial_param(id) {
            assert_eq!(p.value, b.store.get(id).value, "{}", p.name);
        }
    }
}

#[test]
fn adversarial_training_is_deterministic_and_label_blind() {
    let src = toy(ModulationKind::Qam16, 5, 11);
    let labeled_tgt = toy(ModulationKind::Qfsk, 4, 12);
    let run = |tgt: &DatasetManifest| {
        let mut m = build_model(&small_model(2), 8, AdamConfig::default()).unwrap();
        let log = train_mdd(&mut m, &src, tgt, &cfg(0, 2), None).unwrap();
        (m.to_bytes().unwrap(), log.losses_csv())
    };
    let stripped = labeled_tgt.clone().into_unlabeled_train();
    let rebuilt = DatasetManifest {
        frames: labeled_tgt
            .frames
            .iter()
            .map(|f| crate::signal::IQFrame::from_rows(f.rows().to_vec(), f.scheme, None))
            .collect(),
        role: SplitRole::TargetUnlabeledTrain,
        ..labeled_tgt.clone()
    };
    assert_eq!(run(&stripped), run(&stripped));
    assert_eq!(run(&stripped), run(&rebuilt));
}

#[test]
fn epoch_hook_records_test_accuracy() {
    let src = toy(ModulationKind::Qam16, 4, 13);
    let tgt = toy(ModulationKind::Qfsk, 4, 14).into_unlabeled_train();
    let mut m = build_model(&small_model(2), 9, AdamConfig::default()).unwrap();
    let mut calls = Vec::new();
    let mut hook = |e: usize, _: &ModelBundle| -> Result<Option<f64>> {
        calls.push(e);
        Ok(Some(12.5))
    };
    let log = train_mdd(&mut m, &src, &tgt, &cfg(0, 2), Some(&mut hook)).unwrap();
    assert_eq!(calls, vec![0, 1]);
    assert!(log.epochs.iter().all(|r| r.test_accuracy == Some(12.5)));
}

#[test]
fn prediction_ignores_batch_partition() {
    let ds = toy(ModulationKind::Psk8, 40, 15);
    let m = build_model(&small_model(2), 10, AdamConfig::default()).unwrap();
    let whole = predict(&m, &ds.frames).unwrap();
    let mut pieces = Vec::new();
    for chunk in ds.frames.chunks(7) {
        pieces.extend(predict(&m, chunk).unwrap());
    }
    assert_eq!(whole, pieces);
    assert_eq!(whole, predict(&m, &ds.frames).unwrap());
}
