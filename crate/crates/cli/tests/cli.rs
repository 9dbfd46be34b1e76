use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[phantom]
dims = [40, 40, 40]
nodule_count = 2
nodule_diameter_mm = [4.0, 8.0]
vessel_count = 4

[sampling]
m = 64

[train]
epochs = 2
batch_size = 4
point_widths = [8, 16]
head_widths = [8]
"#;

fn pcfpr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcfpr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pcfpr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_global_flags_and_commands() {
    let help = ok(&["--help"]);
    for flag in ["--config", "--seed", "--jobs", "--augment", "--no-augment", "--sampler", "--features"] {
        assert!(help.contains(flag), "missing {flag}");
    }
    for cmd in ["gen", "dataset", "sample", "augment", "train", "eval", "froc", "export-ply"] {
        assert!(help.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = pcfpr(&["sample", "--manifest", s(&missing), "--out", s(dir.path())]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "Io");
    assert!(err["message"].as_str().unwrap().contains("nope.jsonl"));

    let out = pcfpr(&["--features", "xyzp", "froc", "x.csv", "--n-truths", "1"]);
    assert!(!out.status.success());
}

#[test]
fn froc_prints_seven_level_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("labeled.csv");
    fs::write(&csv, "scan_id,score,outcome,truth\na,0.9,tp,n0\na,0.8,fp,\nb,0.7,tp,n1\n").unwrap();
    let out = ok(&["froc", s(&csv), "--n-truths", "2", "--header"]);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("0.125 0.25"));
    assert_eq!(lines[1], "0.500 0.500 1.000 1.000 1.000 1.000 1.000 | 0.857");
}

#[test]
fn export_ply_colours_mask_points() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("one.npcd");
    let mut bytes = b"NPCD1".to_vec();
    bytes.extend(1u32.to_le_bytes());
    for v in [1.0f32, 2.0, 3.0, 0.0, 0.5] {
        bytes.extend(v.to_le_bytes());
    }
    bytes.push(1);
    fs::write(&cloud, bytes).unwrap();
    ok(&["export-ply", "--out", s(dir.path()), s(&cloud)]);
    let ply = fs::read_to_string(dir.path().join("one.ply")).unwrap();
    assert!(ply.contains("element vertex 1\n"));
    assert!(ply.trim_end().ends_with("1 2 3 255 0 0"));

    fs::write(&cloud, b"junk").unwrap();
    let out = pcfpr(&["export-ply", "--out", s(dir.path()), s(&cloud)]);
    assert!(!out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["failed"][0]["kind"], "MalformedCloudFile");
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_pipeline(root: &Path, cfg: &Path, jobs: &str) {
    let data = root.join("data");
    let c = s(cfg);
    let common = ["--config", c, "--seed", "7", "--jobs", jobs];
    let with = |extra: &[&str]| {
        let mut v: Vec<&str> = common.to_vec();
        v.extend_from_slice(extra);
        ok(&v)
    };
    let gen = with(&["gen", "--out", s(&data), "--scans", "8"]);
    assert!(gen.contains("\"scans\": 8"));
    with(&["dataset", "--dir", s(&data), "--folds", "4"]);
    let train_clouds = root.join("clouds_train");
    let test_clouds = root.join("clouds_test");
    with(&["sample", "--manifest", s(&data.join("train.jsonl")), "--out", s(&train_clouds)]);
    with(&["sample", "--manifest", s(&data.join("test.jsonl")), "--out", s(&test_clouds)]);
    let weights = root.join("model.nwts");
    with(&["train", "--clouds", s(&train_clouds), "--out", s(&weights)]);
    let report = with(&[
        "eval",
        "--clouds",
        s(&test_clouds),
        "--weights",
        s(&weights),
        "--truths",
        s(&data.join("test_truths.json")),
        "--out",
        s(&root.join("report")),
    ]);
    assert!(report.lines().nth(1).unwrap().contains(" | "));
}

#[test]
fn end_to_end_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_pipeline(&a, &cfg, "1");
    run_pipeline(&b, &cfg, "3");
    let ta = tree_bytes(&a);
    assert_eq!(ta, tree_bytes(&b));
    assert_eq!(ta.iter().filter(|(p, _)| p.ends_with("volume.nvol")).count(), 8);
    let scan_dirs = fs::read_dir(a.join("data/scans")).unwrap().count();
    assert_eq!(scan_dirs, 8);

    let first_cloud = ta
        .iter()
        .find(|(p, _)| p.starts_with("clouds_train") && p.ends_with(".npcd"))
        .unwrap();
    assert_eq!(first_cloud.1.len(), 9 + 64 * 21);
}

#[test]
fn samplers_produce_different_clouds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    let c = s(&cfg);
    ok(&["--config", c, "gen", "--out", s(&data), "--scans", "5"]);
    ok(&["--config", c, "dataset", "--dir", s(&data)]);
    let test = data.join("test.jsonl");
    let rbf = dir.path().join("rbf");
    let uni = dir.path().join("uni");
    ok(&["--config", c, "--sampler", "rbf", "sample", "--manifest", s(&test), "--out", s(&rbf)]);
    ok(&["--config", c, "--sampler", "uniform", "sample", "--manifest", s(&test), "--out", s(&uni)]);
    let ids: serde_json::Value = serde_json::from_slice(&fs::read(rbf.join("index.json")).unwrap()).unwrap();
    let id = ids["clouds"][0].as_str().unwrap();
    let a = fs::read(rbf.join(format!("{id}.npcd"))).unwrap();
    let b = fs::read(uni.join(format!("{id}.npcd"))).unwrap();
    assert_eq!(a.len(), b.len());
    assert_ne!(a, b);
    let side: serde_json::Value = serde_json::from_slice(&fs::read(rbf.join(format!("{id}.json"))).unwrap()).unwrap();
    assert_eq!(side["stats"]["mode"], "rbf");
    assert!(side["stats"]["mask_points"].as_u64().unwrap() >= side["stats"]["mask_quota"].as_u64().unwrap());
}
