//! End-to-end tests of the `savnet` binary: exit codes, file layout of
//! each command's output, and the full synth -> train -> eval -> viz
//! pipeline on a miniature corpus.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn savnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_savnet"))
        .args(args)
        .output()
        .expect("run savnet")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// 4 seen / 2 unseen / 4 clips per class; fast enough for every test.
fn tiny_corpus(dir: &Path, seed: u64) {
    let out = savnet(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--seen",
        "4",
        "--unseen",
        "2",
        "--per-class",
        "4",
    ]);
    assert!(out.status.success(), "synth failed: {}", stderr_of(&out));
}

const TINY_TRAIN_CFG: &str = "epochs = 2\nbatch_size = 8\nlearning_rate = 1e-3\n\
    optimizer = adam\nseed = 3\nloss.mode = sm\nloss.use_local = true\n\
    encoder.blocks = 4x1,8x1\nbasemod.hidden = 8\n";

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = savnet(&["synth", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_succeeds() {
    let out = savnet(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).contains("synth"));
}

#[test]
fn bad_task_value_is_a_usage_error() {
    let out = savnet(&[
        "eval",
        "--ckpt",
        "x",
        "--manifest",
        "y",
        "--dict",
        "z",
        "--task",
        "nonsense",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let out = savnet(&[
        "features",
        "--wav",
        tmp.path().join("absent.wav").to_str().unwrap(),
        "--out",
        tmp.path().join("f.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).starts_with("error:"));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_savnet"))
        .env("SAVNET_THREADS", "zero")
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("SAVNET_THREADS"));
}

#[test]
fn synth_layout_matches_contract() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("corpus");
    tiny_corpus(&dir, 0);

    let manifest = fs::read_to_string(dir.join("manifest.csv")).unwrap();
    let rows: Vec<&str> = manifest.lines().skip(1).collect();
    assert_eq!(rows.len(), 4 * 4 + 2 * 4);
    let dict = fs::read_to_string(dir.join("dictionary.csv")).unwrap();
    assert_eq!(dict.lines().skip(1).count(), 6);

    // Train rows reference seen classes only, and every wav exists.
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let (path, label, split) = (fields[0], fields[1], fields[2]);
        assert!(dir.join(path).is_file(), "missing {path}");
        if split == "train" {
            assert!(label.starts_with("seen"), "train row for {label}");
        }
    }
}

#[test]
fn features_writes_the_grid() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("corpus");
    tiny_corpus(&dir, 1);
    let wav = fs::read_dir(dir.join("wav"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let csv = tmp.path().join("features.csv");
    let out = savnet(&[
        "features",
        "--wav",
        wav.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 80);
    for line in lines {
        assert_eq!(line.split(',').count(), 100);
        for cell in line.split(',') {
            cell.parse::<f64>().expect("numeric cell");
        }
    }
}

#[test]
fn duplicate_savs_warn_but_run() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("corpus");
    tiny_corpus(&dir, 2);

    // Give the second seen class the first one's vector.
    let dict_path = dir.join("dictionary.csv");
    let text = fs::read_to_string(&dict_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let first_bits = lines[1].splitn(3, ',').nth(2).unwrap().to_owned();
    let second: Vec<&str> = lines[2].splitn(3, ',').collect();
    lines[2] = format!("{},{},{first_bits}", second[0], second[1]);
    fs::write(&dict_path, lines.join("\n") + "\n").unwrap();

    let cfg = tmp.path().join("train.cfg");
    fs::write(&cfg, TINY_TRAIN_CFG).unwrap();
    let out = savnet(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--manifest",
        dir.join("manifest.csv").to_str().unwrap(),
        "--dict",
        dict_path.to_str().unwrap(),
        "--out",
        tmp.path().join("m.ckpt").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("share one attribute vector"),
        "missing warning: {}",
        stderr_of(&out)
    );
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("corpus");
    tiny_corpus(&dir, 3);
    let cfg = tmp.path().join("train.cfg");
    fs::write(&cfg, TINY_TRAIN_CFG).unwrap();
    let ckpt = tmp.path().join("model.ckpt");

    let out = savnet(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--manifest",
        dir.join("manifest.csv").to_str().unwrap(),
        "--dict",
        dir.join("dictionary.csv").to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train: {}", stderr_of(&out));
    assert!(ckpt.is_file());

    for task in ["zs", "gzs", "seen"] {
        let out = savnet(&[
            "eval",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--manifest",
            dir.join("manifest.csv").to_str().unwrap(),
            "--dict",
            dir.join("dictionary.csv").to_str().unwrap(),
            "--task",
            task,
        ]);
        assert!(out.status.success(), "eval {task}: {}", stderr_of(&out));
        let line = stdout_of(&out);
        let needle = format!("{task}_accuracy=");
        let acc: f64 = line
            .lines()
            .find_map(|l| l.strip_prefix(&needle))
            .unwrap_or_else(|| panic!("no {needle} line in:\n{line}"))
            .parse()
            .unwrap();
        assert!((0.0..=1.0).contains(&acc), "{task} accuracy {acc}");
    }

    let wav = fs::read_dir(dir.join("wav"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let maps = tmp.path().join("maps");
    let out = savnet(&[
        "viz",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--wav",
        wav.to_str().unwrap(),
        "--out",
        maps.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "viz: {}", stderr_of(&out));
    let pgms = fs::read_dir(&maps)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().map(|x| x == "pgm") == Some(true))
        .count();
    assert_eq!(pgms, 15);
    assert!(maps.join("index.csv").is_file());
}

#[test]
fn thread_count_does_not_change_the_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("corpus");
    tiny_corpus(&dir, 4);
    let cfg = tmp.path().join("train.cfg");
    fs::write(&cfg, TINY_TRAIN_CFG).unwrap();

    let mut checkpoints = Vec::new();
    for threads in ["1", "3"] {
        let ckpt = tmp.path().join(format!("m{threads}.ckpt"));
        let out = Command::new(env!("CARGO_BIN_EXE_savnet"))
            .env("SAVNET_THREADS", threads)
            .args([
                "train",
                "--config",
                cfg.to_str().unwrap(),
                "--manifest",
                dir.join("manifest.csv").to_str().unwrap(),
                "--dict",
                dir.join("dictionary.csv").to_str().unwrap(),
                "--out",
                ckpt.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr_of(&out));
        checkpoints.push(fs::read(&ckpt).unwrap());
    }
    assert_eq!(
        checkpoints[0], checkpoints[1],
        "SAVNET_THREADS changed training results"
    );
}
