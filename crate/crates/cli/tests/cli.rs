use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn histocube(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histocube"))
        .args(args)
        .current_dir(dir)
        .env_remove("HISTOCUBE_THREADS")
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn lh_reproduces_the_golden_cube() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("six_by_eight.pgm");
    let args = ["lh", &input, "--window", "center-weighted:1:0.5", "--mode", "direct", "-o", "cube.bin"];
    let out = histocube(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let golden = std::fs::read(fixture("six_by_eight_cw1.histcube")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("cube.bin")).unwrap(), golden);
    let first = std::fs::read_to_string(dir.path().join("cube.bin.manifest.toml")).unwrap();
    assert_eq!(code(&histocube(&args, dir.path())), 0);
    let second = std::fs::read_to_string(dir.path().join("cube.bin.manifest.toml")).unwrap();
    let hash = |s: &str| s.lines().find(|l| l.starts_with("manifest_hash")).unwrap().to_string();
    assert_eq!(hash(&first), hash(&second));
}

#[test]
fn constant_image_gives_binary_levels() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.pgm"), b"P5\n4 3\n2\n\x01\x01\x01\x01\x01\x01\x01\x01\x01\x01\x01\x01").unwrap();
    let out = histocube(&["lh", "c.pgm", "--window", "box:1", "-o", "c.cube", "--stack", "levels"], dir.path());
    assert_eq!(code(&out), 0);
    for (y, want) in [(0, 0u8), (1, 255), (2, 0)] {
        let bytes = std::fs::read(dir.path().join(format!("levels/level_{y:04}.pgm"))).unwrap();
        let pixels = &bytes[bytes.len() - 12..];
        assert!(pixels.iter().all(|&p| p == want), "level {y}: {pixels:?}");
    }
}

#[test]
fn synth_train_classify_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str]| {
        let out = histocube(args, d);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["synth", "--preset", "connective", "--size", "64", "--count", "2", "--seed", "5", "-o", "syn"]);
    for f in ["texture_000.pgm", "labels_000.pgm", "labels_000.pgm.palette", "texture_001.pgm", "manifest.toml"] {
        assert!(d.join("syn").join(f).exists(), "{f}");
    }
    let w = ["--window", "box:2"];
    let train = [&["train", "--image", "syn/texture_000.pgm", "--labels", "syn/labels_000.pgm", "-m", "40", "-n", "1", "-o", "c.hclf"][..], &w].concat();
    run(&train);
    let classify = [&["classify", "--image", "syn/texture_001.pgm", "--classifier", "c.hclf", "-o", "pred.pgm"][..], &w].concat();
    run(&classify);
    let out = run(&["eval", "--predicted", "pred.pgm", "--truth", "syn/labels_001.pgm", "--erode", "2", "-o", "cm.txt"]);
    assert!(stdout(&out).lines().count() >= 3);
    assert!(d.join("cm.txt.manifest.toml").exists());
    // identity evaluation
    let out = run(&["eval", "--predicted", "syn/labels_001.pgm", "--truth", "syn/labels_001.pgm"]);
    let table = stdout(&out);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert!(rows[0].trim_end().ends_with(" 0") && rows[0].contains("100"));
    assert!(rows[1].trim_end().ends_with("100"));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = histocube(&["synth", "--preset", "pseudovascular", "--size", "32", "--seed", "9", "-o", out], dir.path());
        assert_eq!(code(&o), 0);
    }
    for f in ["texture_000.pgm", "labels_000.pgm"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let flat = "[grid]\nwidth = 2\nheight = 2\n\n[model]\nkind = \"class_table\"\nnum_labels = 2\nclasses = [{ labels = [[1, 0], [0, 0]], mass = 1.0 }]\n";
    let fixed = "[grid]\nwidth = 3\nheight = 3\n\n[model]\nkind = \"table\"\nnum_labels = 2\nentries = [{ labels = [[0, 0, 1], [0, 0, 1], [1, 1, 1]], p = 1.0 }]\n";
    std::fs::write(dir.path().join("flat.toml"), flat).unwrap();
    std::fs::write(dir.path().join("fixed.toml"), fixed).unwrap();
    let out = histocube(&["verify", "--config", "flat.toml", "--window", "box:1", "--require", "flatness,bound"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("lambda = [0.750000, 0.250000]"));
    let text = stdout(&out);
    let eps: f64 = text.split("max |eps| ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(eps < 1e-12, "{text}");
    let out = histocube(&["verify", "--config", "fixed.toml", "--window", "box:1"], dir.path());
    assert_eq!(code(&out), 0);
    let out = histocube(&["verify", "--config", "fixed.toml", "--window", "box:1", "--require", "flatness"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&histocube(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&histocube(&["lh", "x.pgm", "-o", "y", "--window", "hexagon"], dir.path())), 1);
    assert_eq!(code(&histocube(&["synth", "--config", "a.toml", "--preset", "cartilage", "-o", "o"], dir.path())), 1);
    assert_eq!(code(&histocube(&["lh", "missing.pgm", "-o", "y"], dir.path())), 2);
    std::fs::write(dir.path().join("junk.pgm"), b"P7 nonsense").unwrap();
    assert_eq!(code(&histocube(&["lh", "junk.pgm", "-o", "y"], dir.path())), 2);
    std::fs::write(dir.path().join("bad.toml"), "[grid]\nwidth = 2\n").unwrap();
    let out = histocube(&["verify", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(code(&histocube(&["--help"], dir.path())), 0);
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_histocube"))
        .args(["lh", &fixture("patch.pgm"), "--window", "box:1", "-o", "p.cube"])
        .current_dir(dir.path())
        .env("HISTOCUBE_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_histocube"))
        .args(["lh", &fixture("patch.pgm"), "-o", "p.cube"])
        .current_dir(dir.path())
        .env("HISTOCUBE_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}
