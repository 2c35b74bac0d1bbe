use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TOY: &str = r#"{
  "name": "toy",
  "input": [8, 8, 3],
  "operand_bits": 4,
  "layers": [
    {"name": "c1", "kind": "conv", "kernel": [3, 3, 3, 4], "stride": 1, "padding": 1, "has_bias": true},
    {"name": "r1", "kind": "activation", "function": "relu"},
    {"name": "c2", "kind": "conv", "kernel": [5, 5, 4, 2], "stride": 2, "padding": 2},
    {"name": "f", "kind": "fc", "in_features": 32, "out_features": 5, "has_bias": true}
  ]
}
"#;

fn opima(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opima")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = opima(&["simulate", "--workload", "resnet18", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["layers.csv", "latency_breakdown.dat", "energy_breakdown.csv", "power_breakdown.csv", "summary.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(dir.path().join("layers.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,layer,kind,operand_bits,mac_count,slot_count,utilization,processing_latency_ns,writeback_latency_ns,energy_pj"
    );
    assert_eq!(lines.count(), 51);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["parameters"], 11_584_865u64);
}

#[test]
fn exact_mode_on_a_toy_network() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("toy.json");
    fs::write(&net, TOY).unwrap();
    let out = dir.path().join("out");
    for bits in ["4", "8"] {
        let o = opima(&["simulate", "--workload", path(&net), "--bits", bits, "--exact-mode", "--out", path(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("PASS: 4/4 layer outputs"), "{}", stdout(&o));
        assert!(fs::read_to_string(out.join("functional.txt")).unwrap().starts_with("PASS"));
    }
}

#[test]
fn missing_workload_is_a_config_error() {
    let o = opima(&["simulate", "--workload", "/nonexistent/net.json", "--out", "/nonexistent/out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/net.json"), "{}", stderr(&o));
}

#[test]
fn dse_defaults_and_single_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let o = opima(&["dse", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("best group count: G=16"));
    let csv = fs::read_to_string(dir.path().join("dse.csv")).unwrap();
    assert!(csv.starts_with("groups,power_w,normalized_power,mac_throughput,rows_available,mac_per_watt\n"));
    assert_eq!(csv.lines().count(), 8);

    let cfg = dir.path().join("one.json");
    fs::write(&cfg, r#"{"dse_groups": [4]}"#).unwrap();
    let o = opima(&["dse", "--config", path(&cfg), "--out", path(&dir.path().join("one"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("best group count: G=4"));
}

#[test]
fn validate_passes_on_builtins() {
    let o = opima(&["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{out}");
}

#[test]
fn corrupted_catalog_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/networks");
    for e in fs::read_dir(&src).unwrap() {
        let p = e.unwrap().path();
        let mut text = fs::read_to_string(&p).unwrap();
        if p.file_stem().unwrap() == "vgg16" {
            text = text.replacen("\"out_features\": 2,", "\"out_features\": 3,", 1);
        }
        fs::write(dir.path().join(p.file_name().unwrap()), text).unwrap();
    }
    let o = opima(&["validate", "--catalog-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(5), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("FAIL catalog") && out.contains("vgg16"), "{out}");
}

#[test]
fn negative_loss_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"device": {"loss": {"mr_drop_db": -0.5}}}"#).unwrap();
    let o = opima(&["simulate", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn artifacts_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let run = |w: &str| {
        let out = dir.path().join(format!("w{w}"));
        for cmd in ["simulate", "dse", "report"] {
            let o = opima(&[cmd, "--workload", "inceptionv2", "--workers", w, "--seed", "3", "--out", path(&out)]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        out
    };
    let (a, b) = (run("1"), run("4"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}
