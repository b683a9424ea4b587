mod common;

use std::fs;
use std::path::Path;

use common::*;
use rffsei::signal::io::read_dataset;
use rffsei::signal::SplitRole;

fn run_pipeline(cfg: &str, dir: &Path, extra: &[&str]) {
    let d = dir.to_str().unwrap();
    for cmd in ["gen", "pretrain", "train"] {
        let mut args = vec![cmd, "--config", cfg, "--out", d];
        if cmd == "train" {
            args.extend_from_slice(extra);
        }
        cli_ok(&args);
    }
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn gen_writes_headed_datasets_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE_CFG);
    let out = tmp.path().join("o");
    cli_ok(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    for f in ["source.rfds", "target_train.rfds", "target_test.rfds"] {
        assert_eq!(&fs::read(out.join(f)).unwrap()[..8], b"RFFSEI1\n");
    }
    let tt = read_dataset(&out.join("target_train.rfds"), SplitRole::TargetUnlabeledTrain).unwrap();
    assert!(tt.frames.iter().all(|f| f.label.is_none()));
    assert_eq!(tt.len(), 3 * 6);
    assert!(fs::read_to_string(out.join("manifest.txt")).unwrap().contains("source.rfds"));
    assert!(out.join("gen.effective.cfg").exists());
}

#[test]
fn missing_required_field_names_field_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMOKE_CFG.replace("seed = 6\n", "");
    let cfg = write_config(tmp.path(), &text);
    let out = cli(&["gen", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("data.seed"), "{err}");
    let data_line = text.lines().position(|l| l == "[data]").unwrap() + 1;
    assert!(err.contains(&format!("line {data_line}:")), "{err}");
}

#[test]
fn seed_flag_changes_generated_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE_CFG);
    let c = cfg.to_str().unwrap();
    let gen = |name: &str, seed: Option<&str>| {
        let out = tmp.path().join(name);
        let mut args = vec!["gen", "--config", c, "--out", out.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend_from_slice(&["--seed", s]);
        }
        cli_ok(&args);
        fs::read(out.join("source.rfds")).unwrap()
    };
    let base = gen("a", None);
    assert_eq!(gen("b", Some("6")), base);
    assert_ne!(gen("c", Some("99")), base);
    let eff = fs::read_to_string(tmp.path().join("c/gen.effective.cfg")).unwrap();
    assert!(eff.contains("seed = 99"), "{eff}");
}

#[test]
fn lambda_zero_reduces_total_to_cross_entropy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE_CFG);
    let dir = tmp.path().join("o");
    run_pipeline(cfg.to_str().unwrap(), &dir, &["--lambda", "0"]);
    let losses = fs::read_to_string(dir.join("train_losses.csv")).unwrap();
    let (ce, total) = (csv_column(&losses, "ce"), csv_column(&losses, "total"));
    assert!(!ce.is_empty());
    assert_eq!(ce, total);
    assert!(csv_column(&losses, "mdd").iter().any(|m| *m != 0.0));
}

#[test]
fn eval_on_source_reproduces_pretrain_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE_CFG);
    let c = cfg.to_str().unwrap();
    let dir = tmp.path().join("o");
    let d = dir.to_str().unwrap();
    cli_ok(&["gen", "--config", c, "--out", d]);
    cli_ok(&["pretrain", "--config", c, "--out", d]);
    let ckpt = dir.join("pretrained.ckpt");
    let src = dir.join("source.rfds");
    cli_ok(&[
        "eval", "--config", c, "--out", d, "--checkpoint", ckpt.to_str().unwrap(), "--dataset", src.to_str().unwrap(),
        "--role", "source_labeled",
    ]);
    let summary = fs::read_to_string(dir.join("pretrain_summary.txt")).unwrap();
    let want: f64 = summary.trim().rsplit(' ').next().unwrap().parse().unwrap();
    let report = fs::read_to_string(dir.join("eval_source.txt")).unwrap();
    let got: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("accuracy = "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(got, want);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("eval_source.json")).unwrap()).unwrap();
    assert_eq!(json["accuracy"].as_f64().unwrap(), want);
}

#[test]
fn export_embeddings_has_one_row_per_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE_CFG);
    let c = cfg.to_str().unwrap();
    let dir = tmp.path().join("o");
    run_pipeline(c, &dir, &[]);
    let ds = dir.join("target_train.rfds");
    let ckpt = dir.join("model.ckpt");
    cli_ok(&[
        "export-embeddings", "--config", c, "--out", dir.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(),
        "--dataset", ds.to_str().unwrap(), "--role", "target_unlabeled_train",
    ]);
    let csv = fs::read_to_string(dir.join("embeddings_target_train.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with(|c: char| c.is_alphabetic())).collect();
    assert_eq!(rows.len(), 18);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols.len(), 8 + 2);
        assert_eq!(cols[0], "-1");
        assert_eq!(cols[1], "BFSK");
    }
}

#[test]
fn checkpoint_from_another_shape_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE_CFG);
    let c = cfg.to_str().unwrap();
    let dir = tmp.path().join("o");
    let d = dir.to_str().unwrap();
    cli_ok(&["gen", "--config", c, "--out", d]);
    cli_ok(&["pretrain", "--config", c, "--out", d]);
    let wide = SMOKE_CFG.replace("embedding_dim = 8", "embedding_dim = 9");
    let other = tmp.path().join("other.cfg");
    fs::write(&other, wide).unwrap();
    let out = cli(&["train", "--config", other.to_str().unwrap(), "--out", d]);
    assert!(!out.status.success());
    let out = cli(&["train", "--config", c, "--out", d, "--checkpoint", "/nonexistent.ckpt"]);
    assert!(!out.status.success());
}

#[test]
fn matrix_table_marks_diagonal_and_averages_the_rest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMOKE_CFG);
    let dir = tmp.path().join("o");
    cli_ok(&["matrix", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("matrix.json")).unwrap()).unwrap();
    let cells = json["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    for a in json["averages"].as_array().unwrap() {
        let off: Vec<&serde_json::Value> = cells
            .iter()
            .filter(|c| c["group"] == a["group"] && !c["diagonal"].as_bool().unwrap())
            .collect();
        assert_eq!(off.len(), 1);
        assert_eq!(a["baseline"].as_f64(), off[0]["baseline"].as_f64());
        assert_eq!(a["mdd"].as_f64(), off[0]["mdd"].as_f64());
    }
    let table = fs::read_to_string(dir.join("matrix.txt")).unwrap();
    assert_eq!(table.matches('*').count(), 2 + 1);
    assert!(table.lines().next().unwrap().contains("BPSK"));
}
