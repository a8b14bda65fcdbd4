use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nudc::sim::MANIFEST_NAME;

fn nudc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nudc")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(root: &Path) -> std::path::PathBuf {
    let path = root.join("tiny.toml");
    let text = format!(
        "[model]\nlevels = 2\nunet_depth = 1\nbase_channels = 2\n\n\
         [training]\nbatch_size = 2\nepochs = 1\n\n\
         [data]\nmanifest = \"{}\"\ntrain_count = 3\n\n\
         [synth]\ncount = 4\nz_list = [0.0, 10.0]\nnoise_sigma = 0.0\n\n[synth.phantom]\nheight = 16\nwidth = 16\n",
        root.join("data").join(MANIFEST_NAME).display()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[model]\nlevels = 0\n").unwrap();
    let out = nudc(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = nudc(&["train", "--profile", "huge"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_manifest_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tsv");
    let out = nudc(&["train", "--profile", "desk", "--manifest", s(&missing), "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tsv"));
}

#[test]
fn synth_train_eval_triptych_round() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = tiny_config(root);
    let common = ["--profile", "desk", "--config", s(&cfg), "--seed", "4"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = extra.iter().chain(common.iter()).copied().collect();
        let out = nudc(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["synth", "--out", s(&root.join("data"))]);
    run(&["train", "--out", s(&root.join("run"))]);
    let ckpt = root.join("run/latest.ckpt");
    assert!(ckpt.exists() && root.join("run/best.ckpt").exists());
    assert_eq!(fs::read_to_string(root.join("run/loss_log.csv")).unwrap().lines().count(), 2);

    run(&["eval", "--checkpoint", s(&ckpt), "--out", s(&root.join("eval"))]);
    let metrics = fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "tag,model,levels,mode,psnr_db,ssim,params");
    assert_eq!(lines.len(), 5, "{metrics}");
    assert!(lines.iter().any(|l| l.starts_with("z0,input,") && l.contains(",inf,")));

    let manifest = fs::read_to_string(root.join("data").join(MANIFEST_NAME)).unwrap();
    let row: Vec<&str> = manifest
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .find(|cols| cols[2] == "10")
        .unwrap();
    let target = root.join("data").join(row[0]);
    let input = root.join("data").join(row[1]);
    let png = root.join("trip.png");
    run(&["triptych", "--checkpoint", s(&ckpt), "--input", s(&input), "--target", s(&target), "--out", s(&png)]);
    let bytes = fs::read(&png).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
}

#[test]
fn ablate_writes_sorted_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = tiny_config(root);
    let common = ["--profile", "desk", "--config", s(&cfg)];
    let data_dir = root.join("data");
    let mut args = vec!["synth", "--out", s(&data_dir)];
    args.extend(common);
    assert!(nudc(&args).status.success());
    let out_dir = root.join("abl");
    let mut args = vec!["ablate", "--levels", "1,2", "--modes", "residual,concat", "--out", s(&out_dir)];
    args.extend(common);
    let out = nudc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4 * 2, "{report}");
    assert!(out_dir.join("n2_concat/latest.ckpt").exists());
    let bad = nudc(&["ablate", "--modes", "sideways", "--out", s(&out_dir)]);
    assert_eq!(bad.status.code(), Some(2));
}
