use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hwr::imageproc::GrayImage;

fn hwr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hwr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hwr(args);
    assert!(
        out.status.success(),
        "hwr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "model": {"conv_channels": [2, 2, 2], "hidden": 4, "cell": "gru"},
            "train": {"augmentation": [], "batch_size": 8},
            "benchmark_presets": [
                {"name": "tiny", "conv_channels": [2, 2, 2], "hidden": 3},
                {"name": "wider", "conv_channels": [3, 3, 3], "hidden": 4}
            ]
        }"#,
    )
    .unwrap();
    path
}

/// Synthetic pages → ingest, returning (run dir, config path).
fn ingested(words: usize) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let pages = tmp.path().join("pages");
    let run = tmp.path().join("run");
    ok(&["--out", p(&pages), "synth", "--alphabet", "5", "--words", &words.to_string()]);
    ok(&["--out", p(&run), "ingest", "--manifest", p(&pages.join("manifest.json"))]);
    let cfg = tiny_config(tmp.path());
    (tmp, run, cfg)
}

#[test]
fn ingest_reports_split_and_is_reproducible() {
    let (tmp, run, _) = ingested(100);
    let manifest = tmp.path().join("pages/manifest.json");
    let split = std::fs::read(run.join("split.json")).unwrap();
    let again = tmp.path().join("again");
    let stdout = ok(&["--out", p(&again), "ingest", "--manifest", p(&manifest)]);
    assert!(stdout.contains("samples: 100"), "{stdout}");
    assert!(stdout.contains("train 70 / val 15 / test 15"), "{stdout}");
    assert!(stdout.contains("charset size (C): 5"), "{stdout}");
    assert_eq!(std::fs::read(again.join("split.json")).unwrap(), split);
    let other = tmp.path().join("other");
    ok(&["--seed", "9", "--out", p(&other), "ingest", "--manifest", p(&manifest)]);
    assert_ne!(std::fs::read(other.join("split.json")).unwrap(), split);
    let charset: Vec<u32> = serde_json::from_slice(&std::fs::read(run.join("charset.json")).unwrap()).unwrap();
    assert_eq!(charset, vec!['a' as u32, 'b' as u32, 'c' as u32, 'd' as u32, 'e' as u32]);
}

#[test]
fn ingest_drops_words_longer_than_ten() {
    let tmp = tempfile::tempdir().unwrap();
    let page = GrayImage::filled(40, 400, 255.0);
    page.save_png(&tmp.path().join("page.png")).unwrap();
    let mut words: Vec<String> = (0..9).map(|i| format!("w{i}")).collect();
    words.push("abcdefghijk".into());
    let entries: Vec<String> = words
        .iter()
        .enumerate()
        .map(|(i, w)| format!(r#"{{"bbox": [{}, 0, 30, 40], "text": "{w}"}}"#, i * 40))
        .collect();
    let manifest = tmp.path().join("manifest.json");
    std::fs::write(
        &manifest,
        format!(r#"{{"pages": [{{"image": "page.png", "words": [{}]}}]}}"#, entries.join(",")),
    )
    .unwrap();
    let run = tmp.path().join("run");
    let stdout = ok(&["--out", p(&run), "ingest", "--manifest", p(&manifest)]);
    assert!(stdout.contains("samples: 9 (1 dropped"), "{stdout}");
    let index: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("samples.json")).unwrap()).unwrap();
    assert_eq!(index["samples"].as_array().unwrap().len(), 9);
}

#[test]
fn bad_manifest_fails_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.json");
    std::fs::write(&manifest, r#"{"pages": [{"image": "x.png", "words": [{"bbox": [0, 0, 5], "text": "a"}]}]}"#).unwrap();
    let out = hwr(&["--out", p(&tmp.path().join("run")), "ingest", "--manifest", p(&manifest)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pages[0].words[0].bbox"), "{err}");
    let out = hwr(&["ingest"]);
    assert!(!out.status.success());
}

#[test]
fn zero_epoch_training_writes_initial_checkpoint() {
    let (_tmp, run, cfg) = ingested(20);
    let stdout = ok(&["--config", p(&cfg), "--out", p(&run), "train", "--max-epochs", "0"]);
    assert!(stdout.contains("best epoch 0"), "{stdout}");
    assert!(run.join("checkpoint.ckpt").exists());
    assert_eq!(
        std::fs::read_to_string(run.join("loss_curve.csv")).unwrap(),
        "epoch,train_loss,val_loss,val_cer,val_wer\n"
    );
}

#[test]
fn training_eval_and_predict_are_deterministic() {
    let (tmp, run, cfg) = ingested(24);
    let train = |dir: &Path| {
        ok(&["--config", p(&cfg), "--out", p(dir), "train", "--max-epochs", "2"]);
        std::fs::read_to_string(dir.join("loss_curve.csv")).unwrap()
    };
    let curve = train(&run);
    assert_eq!(curve.lines().count(), 3);
    let copy = tmp.path().join("copy");
    std::fs::create_dir(&copy).unwrap();
    for f in ["charset.json", "split.json", "samples.json"] {
        std::fs::copy(run.join(f), copy.join(f)).unwrap();
    }
    assert_eq!(train(&copy), curve);
    assert_eq!(
        std::fs::read(run.join("checkpoint.ckpt")).unwrap(),
        std::fs::read(copy.join("checkpoint.ckpt")).unwrap()
    );

    let eval = |split: &str, decoder: &str| {
        let stdout = ok(&["--out", p(&run), "eval", "--split", split, "--decoder", decoder]);
        assert!(stdout.contains("cer"), "{stdout}");
        let stem = format!("report_{split}_{decoder}");
        let json = std::fs::read_to_string(run.join(format!("{stem}.json"))).unwrap();
        let csv = std::fs::read_to_string(run.join(format!("{stem}.csv"))).unwrap();
        (json, csv)
    };
    for split in ["train", "val", "test"] {
        let (json, csv) = eval(split, "beam");
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["split", "decoder", "loss", "cer", "wer", "samples"] {
            assert!(v.get(key).is_some(), "report lacks {key}");
        }
        let row = &v["samples"][0];
        for key in ["ref", "hyp", "s", "i", "d"] {
            assert!(row.get(key).is_some(), "sample row lacks {key}");
        }
        assert!(csv.lines().any(|l| l == "ref,hyp,s,i,d"));
        assert_eq!(eval(split, "beam"), (json, csv));
    }
    let beam: serde_json::Value = serde_json::from_str(&eval("test", "beam").0).unwrap();
    let greedy: serde_json::Value = serde_json::from_str(&eval("test", "greedy").0).unwrap();
    assert_eq!(beam["loss"], greedy["loss"]);
    let refs = |v: &serde_json::Value| -> Vec<String> {
        v["samples"].as_array().unwrap().iter().map(|r| r["ref"].as_str().unwrap().to_string()).collect()
    };
    assert_eq!(refs(&beam), refs(&greedy));

    let image = tmp.path().join("pages/page_0000.png");
    let first = ok(&["--out", p(&run), "predict", "--image", p(&image)]);
    assert_eq!(first, ok(&["--out", p(&run), "predict", "--image", p(&image)]));
    assert!(first.ends_with('\n'));
}

#[test]
fn eval_rejects_checkpoint_from_other_charset() {
    let (_tmp, run, cfg) = ingested(20);
    ok(&["--config", p(&cfg), "--out", p(&run), "train", "--max-epochs", "0"]);
    let (_tmp2, other, _) = {
        let tmp = tempfile::tempdir().unwrap();
        let pages = tmp.path().join("pages");
        let other = tmp.path().join("run");
        ok(&["--out", p(&pages), "synth", "--alphabet", "7", "--words", "20"]);
        ok(&["--out", p(&other), "ingest", "--manifest", p(&pages.join("manifest.json"))]);
        (tmp, other, ())
    };
    let ck = run.join("checkpoint.ckpt");
    let out = hwr(&["--out", p(&other), "eval", "--checkpoint", p(&ck), "--split", "test"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("character set"));
}

#[test]
fn benchmark_grid_has_four_rows() {
    let (_tmp, run, cfg) = ingested(24);
    let stdout = ok(&["--config", p(&cfg), "--out", p(&run), "benchmark", "--max-epochs", "1", "--decoder", "greedy"]);
    let csv = std::fs::read_to_string(run.join("benchmark.csv")).unwrap();
    assert_eq!(stdout, csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "model,rnn,flops_millions,train_loss,train_cer,train_wer,val_loss,val_cer,val_wer,test_loss,test_cer,test_wer"
    );
    assert_eq!(lines.len(), 5);
    let cells: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 12);
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert_eq!(
        cells,
        [("tiny", "lstm"), ("tiny", "gru"), ("wider", "lstm"), ("wider", "gru")]
            .map(|(a, b)| (a.to_string(), b.to_string()))
    );
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 4);
}

#[test]
fn augment_sheet_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let img = GrayImage::from_fn(40, 120, |y, x| if (x / 10 + y / 10) % 2 == 0 { 0.0 } else { 255.0 });
    let src = tmp.path().join("word.png");
    img.save_png(&src).unwrap();
    let a = tmp.path().join("a.png");
    let b = tmp.path().join("b.png");
    ok(&["--seed", "3", "augment-sheet", "--image", p(&src), "--output", p(&a)]);
    ok(&["--seed", "3", "augment-sheet", "--image", p(&src), "--output", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let sheet = image::open(&a).unwrap().to_luma8();
    assert_eq!((sheet.width(), sheet.height()), (8 * 200 + 7 * 4, 50));

    let identity = tmp.path().join("identity.json");
    std::fs::write(
        &identity,
        r#"[
            {"kind": "cutout_h", "params": {"min_boxes": 0, "max_boxes": 0}, "probability": 0.5},
            {"kind": "cutout_v", "params": {"min_boxes": 0, "max_boxes": 0}, "probability": 0.5},
            {"kind": "gaussian_noise", "params": {"sigma_min": 0, "sigma_max": 0}, "probability": 0.5},
            {"kind": "shift_scale_rotate", "params": {"shift_limit": 0, "scale_min": 1, "scale_max": 1, "rotate_limit": 0}, "probability": 0.5},
            {"kind": "optical_distortion", "params": {"k_limit": 0}, "probability": 0.5},
            {"kind": "grid_distortion", "params": {"cells": 4, "magnitude": 0}, "probability": 0.5},
            {"kind": "affine_jitter", "params": {"grid_step": 25, "sigma": 0}, "probability": 0.5}
        ]"#,
    )
    .unwrap();
    let c = tmp.path().join("c.png");
    ok(&["augment-sheet", "--image", p(&src), "--policies", p(&identity), "--output", p(&c)]);
    let sheet = image::open(&c).unwrap().to_luma8();
    let tile = |t: u32| -> Vec<u8> {
        (0..50).flat_map(|y| (0..200).map(move |x| (x, y))).map(|(x, y)| sheet.get_pixel(t * 204 + x, y)[0]).collect()
    };
    let first = tile(0);
    for t in 1..8 {
        assert_eq!(tile(t), first, "tile {t}");
    }
}
