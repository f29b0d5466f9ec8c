use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pathspin");

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("PATHSPIN_SEED")
        .output()
        .expect("binary runs")
}

fn write_temp(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pathspin-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn run_emits_json_report() {
    let f = fixture("fig1.apparatus");
    let out = run(&["run", f.to_str().unwrap(), "--shots", "2000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["provenance"]["shots"], 2000);
    assert_eq!(v["provenance"]["seed"], 42);
    assert_eq!(v["wing1"]["setting"], "A");
    assert_eq!(v["subensembles"].as_array().unwrap().len(), 2);
    assert_eq!(v["subensembles"][0]["outcome"], "+1");
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let f = fixture("fig1.apparatus");
    let args = ["run", f.to_str().unwrap(), "--shots", "3000", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_resolution_order() {
    let text = std::fs::read_to_string(fixture("fig1.apparatus"))
        .unwrap()
        .replace("seed = 42", "");
    let f = write_temp("noseed.apparatus", &text);
    let f = f.to_str().unwrap();
    let seed_of = |out: Output| json(&out)["provenance"]["seed"].as_u64().unwrap();

    assert_eq!(seed_of(run(&["run", f, "--shots", "100"])), 42);
    let env = Command::new(BIN)
        .args(["run", f, "--shots", "100"])
        .env("PATHSPIN_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(seed_of(env), 77);
    let flag = Command::new(BIN)
        .args(["run", f, "--shots", "100", "--seed", "3"])
        .env("PATHSPIN_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(seed_of(flag), 3);
    let file = Command::new(BIN)
        .args(["run", fixture("fig1.apparatus").to_str().unwrap(), "--shots", "100"])
        .env("PATHSPIN_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(seed_of(file), 42);
}

#[test]
fn wing1_override() {
    let f = fixture("fig1.apparatus");
    let out = run(&["run", f.to_str().unwrap(), "--shots", "100", "--wing1", "B"]);
    let v = json(&out);
    assert_eq!(v["wing1"]["setting"], "B");
    for sub in v["subensembles"].as_array().unwrap() {
        assert!(sub["concurrence"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn run_csv_matches_golden_counts() {
    let f = fixture("fig1.apparatus");
    let out = run(&["run", f.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let golden = std::fs::read_to_string(fixture("fig1_counts.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn sweep_csv_header() {
    let f = fixture("fig1.apparatus");
    let out = run(&["sweep", f.to_str().unwrap(), "--format", "csv", "--points", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "alpha,weight_plus,concurrence_plus,smax_plus,weight_minus,concurrence_minus,smax_minus"
    );
    assert_eq!(lines.len(), 4);
}

#[test]
fn sweep_explicit_angles_out_of_range() {
    let f = fixture("fig1.apparatus");
    let out = run(&["sweep", f.to_str().unwrap(), "--angles", "0,4"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn enumerate_hv_outputs() {
    let out = run(&["enumerate-hv", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("max |S| over noncontextual models = 2"));
    let v = json(&run(&["enumerate-hv"]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 16);
    assert_eq!(v["max_abs_s"], 2.0);
}

#[test]
fn nosignal_and_optimize_succeed() {
    let f = fixture("fig1.apparatus");
    let out = run(&["nosignal", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["sampled"]["within_5_sigma"], true);

    let out = run(&["optimize", f.to_str().unwrap(), "--constraint", "free-spin", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.contains("free-spin")));
}

#[test]
fn exit_codes() {
    let parse = write_temp("parse.apparatus", "[source\n");
    let out = run(&["run", parse.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let invalid = write_temp(
        "invalid.apparatus",
        "[source]\nwing1_setting = A\n[pipeline]\nbs1\nbs2 gamma=0.5 delta=0.5\n[measurement]\nspin_dirs = z, x\n",
    );
    let out = run(&["run", invalid.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("γ²+δ² ≠ 1"));

    assert_eq!(run(&["run", "/nonexistent/file"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let f = fixture("fig1.apparatus");
    let out = run(&["run", f.to_str().unwrap(), "--shots", "0"]);
    assert_ne!(out.status.code(), Some(0));
}
