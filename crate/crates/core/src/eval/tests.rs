use proptest::prelude::*;

use super::*;
use crate::autodiff::AdamConfig;
use crate::config::MatrixConfig;
use crate::model::ModelConfig;
use crate::signal::SplitRole;

#[test]
fn accuracy_examples() {
    assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 100.0);
    assert_eq!(accuracy(&[1, 0, 1, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
    assert_eq!(accuracy(&[0, 1, 1, 1], &[0, 1, 0, 1]).unwrap(), 75.0);
    assert!(matches!(accuracy(&[], &[]), Err(Error::Empty(_))));
    assert!(accuracy(&[0], &[0, 1]).is_err());
}

#[test]
fn confusion_examples() {
    let c = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
    for r in 0..3 {
        for p in 0..3 {
            assert_eq!(c.get(r, p) > 0, r == p);
        }
    }
    let c = confusion(&[0, 0, 0, 0], &[0, 1, 2, 3], 4).unwrap();
    assert_eq!(c.column_sums(), vec![4, 0, 0, 0]);
    assert_eq!(c.top_column_mass(1), 1.0);
    assert!(matches!(confusion(&[0], &[5], 3), Err(Error::ClassOutOfRange { .. })));
}

#[test]
fn confusion_text_is_aligned() {
    let c = confusion(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
    let text = c.to_text();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.len() == lines[0].len()));
}

proptest! {
    #[test]
    fn confusion_consistent_with_accuracy(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)) {
        let (pred, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let c = confusion(&pred, &labels, 5).unwrap();
        prop_assert_eq!(c.total() as usize, labels.len());
        let acc = accuracy(&pred, &labels).unwrap();
        prop_assert_eq!(c.accuracy(), acc);
        prop_assert!((c.trace() as f64 / c.total() as f64 - acc / 100.0).abs() <= 1e-15);
        let mut per_class = vec![0u64; 5];
        for &l in &labels {
            per_class[l] += 1;
        }
        prop_assert_eq!(c.row_sums(), per_class);
        prop_assert!(c.top_column_mass(2) >= 0.4 - 1e-12);
    }

    #[test]
    fn group_averages_recompute(vals in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 6)) {
        let targets = vec![ModulationKind::Qpsk, ModulationKind::Qam16, ModulationKind::Qfsk];
        let groups = vec!["A".to_string(), "B".to_string()];
        let cells: Vec<MatrixCell> = vals
            .iter()
            .enumerate()
            .map(|(i, &(b, m))| MatrixCell {
                group: groups[i / 3].clone(),
                target: targets[i % 3],
                diagonal: i % 3 == i / 3,
                baseline: b,
                mdd: m,
            })
            .collect();
        let mx = ExperimentMatrix::from_cells(groups.clone(), targets.clone(), cells).unwrap();
        for (g, avg) in mx.averages.iter().enumerate() {
            let off: Vec<usize> = (0..3).filter(|&t| t != g).collect();
            prop_assert_eq!(avg.cells, 2);
            let b = off.iter().map(|&t| mx.cell(g, t).baseline).sum::<f64>() / 2.0;
            let m = off.iter().map(|&t| mx.cell(g, t).mdd).sum::<f64>() / 2.0;
            prop_assert_eq!(avg.baseline, Some(b));
            prop_assert_eq!(avg.mdd, Some(m));
        }
        let back: ExperimentMatrix = serde_json::from_str(&mx.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, mx);
    }
}

#[test]
fn all_diagonal_group_has_no_average() {
    let cells = vec![MatrixCell {
        group: "Q".into(),
        target: ModulationKind::Qpsk,
        diagonal: true,
        baseline: 97.0,
        mdd: 96.0,
    }];
    let mx = ExperimentMatrix::from_cells(vec!["Q".into()], vec![ModulationKind::Qpsk], cells).unwrap();
    assert_eq!(mx.averages[0].cells, 0);
    assert_eq!(mx.averages[0].baseline, None);
    let table = mx.to_table();
    assert!(table.contains("97.00/96.00*"), "{table}");
    assert!(ExperimentMatrix::from_cells(vec!["Q".into()], vec![ModulationKind::Qpsk], vec![]).is_err());
}

fn tiny_experiment() -> ExperimentConfig {
    let mut c = ExperimentConfig::with_seeds(3, 4, 5);
    c.fleet.emitter_count = 2;
    c.data.source_frames_per_pair = 6;
    c.data.target_frames_per_pair = 4;
    c.data.test_frames_per_pair = 4;
    c.model = ModelConfig {
        block_channels: vec![4],
        block_strides: vec![2],
        embedding_dim: 6,
        hidden_width: 8,
        class_count: 2,
        ..ModelConfig::default()
    };
    c.train.pretrain_epochs = 1;
    c.train.epochs = 1;
    c.train.batch_size = 4;
    c.train.adam = AdamConfig {
        lr: 1e-3,
        ..AdamConfig::default()
    };
    c.matrix = MatrixConfig {
        groups: vec![
            SchemeGroup {
                name: "PSK".into(),
                schemes: vec![ModulationKind::Bpsk],
            },
            SchemeGroup {
                name: "FSK".into(),
                schemes: vec![ModulationKind::Bfsk],
            },
        ],
        targets: vec![ModulationKind::Bpsk, ModulationKind::Bfsk],
    };
    c
}

#[test]
fn scenario_splits_and_monitor() {
    let cfg = tiny_experiment();
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.pretrain_log.epochs.len(), 1);
    let row = r.mdd_log.epochs.last().unwrap();
    assert_eq!(row.test_accuracy, Some(r.mdd.accuracy));
    assert_eq!(r.baseline.confusion.total(), 8);

    let d = cfg.generate().unwrap();
    assert_eq!(d.source.role, SplitRole::SourceLabeled);
    assert!(!d.target_train.has_any_label());
    assert_eq!(d.target_test.role, SplitRole::TargetUnlabeledTest);
    assert!(d.target_test.labels().is_some());
    assert_ne!(d.target_train.frames[0].rows(), d.target_test.frames[0].rows());
}

#[test]
fn matrix_shape_determinism_and_baseline_independence() {
    let cfg = tiny_experiment();
    let a = run_matrix(&cfg).unwrap();
    assert_eq!(a.cells.len(), 4);
    assert!(a.cell(0, 0).diagonal && a.cell(1, 1).diagonal);
    assert!(!a.cell(0, 1).diagonal);
    assert_eq!(a.averages[0].cells, 1);
    assert!(a.cells.iter().all(|c| (0.0..=100.0).contains(&c.baseline) && (0.0..=100.0).contains(&c.mdd)));
    assert_eq!(a, run_matrix(&cfg).unwrap());

    let mut other = cfg.clone();
    other.train.mdd.lambda = 3.0;
    other.train.mdd.gamma = 2.0;
    let b = run_matrix(&other).unwrap();
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.baseline, y.baseline);
    }
}

#[test]
fn cell_seeds_depend_on_group_and_target() {
    let cfg = tiny_experiment();
    let g = &cfg.matrix.groups;
    let a = cell_config(&cfg, &g[0], ModulationKind::Bpsk);
    let b = cell_config(&cfg, &g[0], ModulationKind::Bfsk);
    let c = cell_config(&cfg, &g[1], ModulationKind::Bpsk);
    assert_ne!(a.data.seed, b.data.seed);
    assert_ne!(a.data.seed, c.data.seed);
    assert_ne!(a.train.seed, c.train.seed);
    assert_eq!(a, cell_config(&cfg, &g[0], ModulationKind::Bpsk));
    assert_eq!(a.fleet, cfg.fleet);
}

#[test]
fn embedding_export_rows() {
    let cfg = tiny_experiment();
    let d = cfg.generate().unwrap();
    let m = build_model(&cfg.model, 1, cfg.train.adam).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.csv");
    export_embeddings(&m, &d.target_train.frames, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), d.target_train.len());
    for r in &rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols.len(), cfg.model.embedding_dim + 2);
        assert_eq!(cols[0], "-1");
        assert_eq!(cols[1], cfg.schemes.target.name());
    }
    let labeled = render_embeddings(&m, &d.source.frames).unwrap();
    assert!(labeled.lines().all(|l| !l.starts_with("-1,")));
    export_embeddings(&m, &d.target_train.frames, &dir.path().join("again.csv")).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("again.csv")).unwrap());
}
