use super::*;
use crate::signal::ModulationKind;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        sample_len: 24,
        block_channels: vec![3, 4],
        block_strides: vec![1, 2],
        embedding_dim: 5,
        class_count: 3,
        hidden_width: 6,
        ..ModelConfig::default()
    }
}

fn frames(n: usize, len: usize, salt: u64) -> Vec<IQFrame> {
    use rand::Rng;
    let mut r = seed::rng(salt, &[]);
    (0..n)
        .map(|_| {
            let data = (0..2 * len).map(|_| r.random_range(-1.0..1.0)).collect();
            IQFrame::from_rows(data, ModulationKind::Qpsk, None)
        })
        .collect()
}

fn refs(v: &[IQFrame]) -> Vec<&IQFrame> {
    v.iter().collect()
}

#[test]
fn same_seed_same_parameters() {
    let a = build_model(&ModelConfig::default(), 9, AdamConfig::default()).unwrap();
    let b = build_model(&ModelConfig::default(), 9, AdamConfig::default()).unwrap();
    let c = build_model(&ModelConfig::default(), 10, AdamConfig::default()).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert_ne!(a.to_bytes().unwrap(), c.to_bytes().unwrap());
}

#[test]
fn default_shapes() {
    let m = build_model(&ModelConfig::default(), 1, AdamConfig::default()).unwrap();
    let fs = frames(32, 200, 1);
    let e = m.extract(&refs(&fs)).unwrap();
    assert_eq!(e.shape(), &[32, 64]);
    assert!(e.is_finite());
    let logits = m.classify(&e, Head::Main).unwrap();
    assert_eq!(logits.shape(), &[32, 7]);
}

#[test]
fn zero_blocks_still_valid() {
    let cfg = ModelConfig {
        block_channels: vec![],
        block_strides: vec![],
        ..tiny_config()
    };
    let m = build_model(&cfg, 1, AdamConfig::default()).unwrap();
    let e = m.extract(&refs(&frames(4, 24, 2))).unwrap();
    assert_eq!(e.shape(), &[4, 5]);
}

#[test]
fn zero_input_gives_zero_embedding() {
    let m = build_model(&ModelConfig::default(), 3, AdamConfig::default()).unwrap();
    let z = IQFrame::from_rows(vec![0.0; 400], ModulationKind::Bpsk, None);
    let e = m.extract(&[&z, &z]).unwrap();
    assert!(e.data().iter().all(|&v| v == 0.0));
    let logits = m.classify(&e, Head::Main).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn fresh_heads_agree() {
    let m = build_model(&tiny_config(), 4, AdamConfig::default()).unwrap();
    let e = m.extract(&refs(&frames(5, 24, 3))).unwrap();
    assert_eq!(
        m.classify(&e, Head::Main).unwrap(),
        m.classify(&e, Head::Adversarial).unwrap()
    );
}

#[test]
fn shape_mismatches_rejected() {
    let m = build_model(&tiny_config(), 4, AdamConfig::default()).unwrap();
    assert!(m.extract(&refs(&frames(2, 30, 3))).is_err());
    assert!(m.classify(&Tensor::zeros(&[2, 4]), Head::Main).is_err());
    assert!(build_model(&ModelConfig { class_count: 1, ..tiny_config() }, 0, AdamConfig::default()).is_err());
    assert!(build_model(&ModelConfig { kernel: 2, ..tiny_config() }, 0, AdamConfig::default()).is_err());
}

#[test]
fn vanishing_threshold_gives_plain_residual() {
    // a model whose shrinkage gates are saturated shut must match a
    // hand-rolled residual forward pass with no thresholding
    let mut m = build_model(&tiny_config(), 5, AdamConfig::default()).unwrap();
    for b in &m.blocks.clone() {
        m.store.get_mut(b.shrink).value.fill(-800.0);
    }
    let fs = frames(3, 24, 4);
    let got = m.extract(&refs(&fs)).unwrap();

    let mut tape = Tape::new();
    let mut x = tape.constant(batch_tensor(&refs(&fs), &m.config).unwrap()).unwrap();
    for b in &m.blocks {
        let w1 = tape.param(&m.store, b.conv1_w).unwrap();
        let b1 = tape.param(&m.store, b.conv1_b).unwrap();
        let w2 = tape.param(&m.store, b.conv2_w).unwrap();
        let b2 = tape.param(&m.store, b.conv2_b).unwrap();
        let h = tape.conv1d(x, w1, b.stride, 1).unwrap();
        let h = tape.add_channel(h, b1).unwrap();
        let h = tape.relu(h).unwrap();
        let h = tape.conv1d(h, w2, 1, 1).unwrap();
        let h = tape.add_channel(h, b2).unwrap();
        let skip = match b.skip {
            Some(id) => {
                let ws = tape.param(&m.store, id).unwrap();
                tape.conv1d(x, ws, b.stride, 0).unwrap()
            }
            None => x,
        };
        x = tape.add(h, skip).unwrap();
    }
    let p = tape.global_average_pool(x).unwrap();
    let pw = tape.param(&m.store, m.proj_w).unwrap();
    let pb = tape.param(&m.store, m.proj_b).unwrap();
    let e = tape.matmul(p, pw).unwrap();
    let e = tape.add_channel(e, pb).unwrap();
    for (a, b) in got.data().iter().zip(tape.value(e).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn thresholds_are_nonnegative() {
    use crate::autodiff::Tensor;
    for s in [-30.0, -1.0, 0.0, 4.0, 30.0] {
        let mut tape = Tape::new();
        let x = tape
            .constant(Tensor::new(vec![2, 3, 4], (0..24).map(|i| (i as f64 - 11.5) * 0.3).collect()).unwrap())
            .unwrap();
        let sc = tape.constant(Tensor::filled(&[3], s)).unwrap();
        let mag = tape.abs(x).unwrap();
        let mean = tape.global_average_pool(mag).unwrap();
        let gate = tape.sigmoid(sc).unwrap();
        let tau = tape.mul_channel(mean, gate).unwrap();
        assert!(tape.value(tau).data().iter().all(|&t| t >= 0.0));
    }
}

#[test]
fn forward_is_bit_stable() {
    let m = build_model(&tiny_config(), 6, AdamConfig::default()).unwrap();
    let fs = frames(4, 24, 5);
    let a = m.extract(&refs(&fs)).unwrap();
    let b = m.extract(&refs(&fs)).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn argmax_invariant_to_logit_shift() {
    let m = build_model(&tiny_config(), 7, AdamConfig::default()).unwrap();
    let e = m.extract(&refs(&frames(6, 24, 6))).unwrap();
    let l = m.classify(&e, Head::Main).unwrap();
    let c = l.shape()[1];
    for i in 0..l.shape()[0] {
        let row = l.row(i);
        let shifted: Vec<f64> = row.iter().map(|v| v + 123.0).collect();
        let arg = |r: &[f64]| (0..c).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        assert_eq!(arg(row), arg(&shifted));
    }
}

#[test]
fn freezing_one_head_leaves_it_untouched() {
    let mut m = build_model(&tiny_config(), 8, AdamConfig { lr: 1e-2, ..AdamConfig::default() }).unwrap();
    let fs = frames(4, 24, 7);
    let initial = m.store.clone();
    for frozen in [Head::Adversarial, Head::Main] {
        let before = m.store.clone();
        let mut tape = Tape::new();
        let x = tape.constant(batch_tensor(&refs(&fs), &m.config).unwrap()).unwrap();
        let e = m.extract_on(&mut tape, x).unwrap();
        let a = m.classify_on(&mut tape, e, Head::Main, None).unwrap();
        let b = m.classify_on(&mut tape, e, Head::Adversarial, None).unwrap();
        let s = tape.add(a, b).unwrap();
        let loss = tape.reduce_sum(s).unwrap();
        m.store.zero_grad();
        tape.backward(loss, &mut m.store).unwrap();
        let frozen_ids = m.head_params(frozen);
        m.adam.step_where(&mut m.store, |id| !frozen_ids.contains(&id)).unwrap();
        for id in frozen_ids {
            assert_eq!(m.store.get(id).value, before.get(id).value);
        }
    }
    for id in m.head_params(Head::Main).into_iter().chain(m.head_params(Head::Adversarial)) {
        assert_ne!(m.store.get(id).value, initial.get(id).value);
    }
}

#[test]
fn copy_main_to_adversarial_matches_values() {
    let mut m = build_model(&tiny_config(), 9, AdamConfig::default()).unwrap();
    let id = m.head_params(Head::Main)[0];
    m.store.get_mut(id).value.fill(0.25);
    m.copy_main_to_adversarial();
    let e = m.extract(&refs(&frames(2, 24, 8))).unwrap();
    assert_eq!(
        m.classify(&e, Head::Main).unwrap(),
        m.classify(&e, Head::Adversarial).unwrap()
    );
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = build_model(&tiny_config(), 10, AdamConfig::default()).unwrap();
    m.save(&path).unwrap();
    let mut n = build_model(&tiny_config(), 11, AdamConfig::default()).unwrap();
    n.load(&path).unwrap();
    assert_eq!(m.to_bytes().unwrap(), n.to_bytes().unwrap());
    let mut wrong = build_model(&ModelConfig { hidden_width: 7, ..tiny_config() }, 0, AdamConfig::default()).unwrap();
    assert!(wrong.load(&path).is_err());
}
