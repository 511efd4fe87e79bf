use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cardioquant::dataset::sha256_hex;
use cardioquant::models::{load_weights, ModelKind};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cardioquant")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, subjects: usize, seed: u64) -> String {
    ok(&["gen", "--subjects", &subjects.to_string(), "--size", "64", "--seed", &seed.to_string(), "--out", p(dir)])
}

const TINY: &str = r#"{
  "folds": 3,
  "stacking_folds": 2,
  "direct": { "epochs": 1, "batch_size": 32, "lr": 0.001 },
  "unet": { "epochs": 1, "batch_size": 16, "lr": 0.001 },
  "masknet": { "epochs": 1, "batch_size": 32, "lr": 0.001 }
}"#;

#[test]
fn gen_writes_subjects_and_is_repeatable() {
    let t = tempfile::tempdir().unwrap();
    let a = gen(&t.path().join("a"), 5, 7);
    let b = gen(&t.path().join("b"), 5, 7);
    let c = gen(&t.path().join("c"), 5, 8);
    let dirs = fs::read_dir(t.path().join("a")).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 5);
    let hash = |s: &str| s.lines().find(|l| l.starts_with("manifest sha256")).unwrap().to_string();
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(hash(&a), hash(&c));
}

#[test]
fn usage_errors_exit_with_2() {
    let t = tempfile::tempdir().unwrap();
    let out = p(t.path());
    assert_eq!(code(&["gen", "--subjects", "0", "--out", out]), 2);
    assert_eq!(code(&["gen", "--subjects", "-3", "--out", out]), 2);
    assert_eq!(code(&["train", "--model", "resnet", "--data", out]), 2);
    assert_eq!(code(&["train", "--model", "direct"]), 2);
    assert_eq!(code(&["viz", "--kind", "heatmap", "--weights", "w"]), 2);
    assert_eq!(code(&["eval", "--stacking", "both", "--data", out]), 2);
    assert_eq!(code(&["--threads", "0", "gen", "--out", out]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn bad_config_and_corrupt_dataset_exit_with_1() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.json");
    fs::write(&cfg, r#"{"sead": 1}"#).unwrap();
    let out = run(&["--config", p(&cfg), "gen", "--out", p(&t.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sead"));

    let data = t.path().join("data");
    gen(&data, 3, 1);
    fs::write(data.join("subj_1/frame_5.pgm"), b"P5 garbage").unwrap();
    let out = run(&["eval", "--data", p(&data), "--out", p(&t.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subj_1"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_then_visualize() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gen(&data, 3, 4);
    let w1 = t.path().join("w1");
    let w2 = t.path().join("w2");
    for w in [&w1, &w2] {
        let s = ok(&["train", "--model", "direct", "--data", p(&data), "--epochs", "1", "--seed", "3", "--out", p(w)]);
        assert!(s.contains("final loss"));
    }
    let blob = |d: &Path| sha256_hex(&fs::read(d.join("direct.weights.bin")).unwrap());
    assert_eq!(blob(&w1), blob(&w2));
    load_weights(&w1.join("direct"), Some(ModelKind::Direct)).unwrap();

    let s = ok(&["train", "--model", "unet", "--data", p(&data), "--folds-exclude", "1", "--epochs", "1", "--out", p(&w1)]);
    assert!(s.contains("held-out dice"));

    let v = t.path().join("viz");
    let s = ok(&["viz", "--kind", "featmaps", "--layer", "conv1", "--weights", p(&w1.join("direct")), "--data", p(&data), "--out", p(&v)]);
    let img = cardioquant::pgm::read_pgm(Path::new(s.trim())).unwrap();
    // 16 tiles in a 4×4 grid with separators
    assert_eq!((img.width, img.height), (4 * 64 + 3, 4 * 64 + 3));

    let s = ok(&[
        "viz", "--kind", "segtriptych", "--subject", "2", "--frame", "0", "--weights", p(&w1.join("unet")), "--data", p(&data), "--out", p(&v),
    ]);
    assert_eq!(s.lines().count(), 3);
    for line in s.lines() {
        let img = cardioquant::pgm::read_pgm(Path::new(line)).unwrap();
        assert_eq!((img.width, img.height), (64, 64));
    }

    let out = run(&["viz", "--kind", "segtriptych", "--weights", p(&t.path().join("nope")), "--data", p(&data), "--out", p(&v)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.weights.json"));
    // a DirectNet file is not a UNet
    let out = run(&["viz", "--kind", "segtriptych", "--weights", p(&w1.join("direct")), "--data", p(&data), "--out", p(&v)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_writes_the_report_and_honors_stacking() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gen(&data, 6, 2);
    let cfg = t.path().join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    let oof = t.path().join("oof");
    let ins = t.path().join("ins");
    ok(&["--config", p(&cfg), "eval", "--data", p(&data), "--out", p(&oof)]);
    ok(&["--config", p(&cfg), "eval", "--data", p(&data), "--stacking", "in-sample", "--out", p(&ins)]);

    let csv = fs::read_to_string(oof.join("report.csv")).unwrap();
    let index_rows = csv.lines().skip(1).filter(|l| !l.contains(",mean,")).count();
    assert_eq!(index_rows, 3 * 11);
    for f in ["report.md", "curves.csv", "phase.csv", "report.json", "predictions/ensemble/subj_0.csv", "models/2/unet.weights.bin"] {
        assert!(oof.join(f).exists(), "{f}");
    }
    assert_ne!(csv, fs::read_to_string(ins.join("report.csv")).unwrap());
    let json = fs::read_to_string(oof.join("report.json")).unwrap();
    assert!(json.contains(&cardioquant::dataset::manifest_hash(&data).unwrap()));
}
