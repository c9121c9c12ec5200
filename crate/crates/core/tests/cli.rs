use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impulsive_iss::gronwall::{h_bound, GronwallDescriptor};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn impiss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impiss")).args(args).env("IMPISS_THREADS", "2").output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_writes_schema_header_and_jump_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s1.csv");
    let out = impiss(&["simulate", "--config", config("s1_simulate.toml").to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema impiss-trajectory/1"));
    assert_eq!(lines.next(), Some("t,x1,jump_flag,left_x1"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let jumps: Vec<&Vec<&str>> = rows.iter().filter(|r| r[2] == "1").collect();
    assert_eq!(jumps.len(), 9);
    for r in &jumps {
        let (t, x, left): (f64, f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap(), r[3].parse().unwrap());
        assert!((x - left / 2.0).abs() < 1e-12);
        assert!((x - (-t).exp() * 0.5f64.powf(t.round())).abs() < 1e-8);
    }
    assert!(rows.iter().filter(|r| r[2] == "0").all(|r| r[3].is_empty()));
}

#[test]
fn bound_csv_matches_library() {
    let path = config("gronwall.toml");
    let out = impiss(&["bound", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema impiss-hbound/1"));
    assert_eq!(lines.next(), Some("t,k,h_k"));
    #[derive(serde::Deserialize)]
    struct File {
        gronwall: GronwallDescriptor,
    }
    let file: File = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let prob = file.gronwall.build().unwrap();
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let (t, h): (f64, f64) = (cells[0].parse().unwrap(), cells[2].parse().unwrap());
        assert_eq!(h, h_bound(&prob, t).unwrap());
        rows += 1;
    }
    assert_eq!(rows, 31);
}

#[test]
fn norms_reproduce_worked_value() {
    let out = impiss(&["norms", "--config", config("norms.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("energy_norm = 9.0000000000000000e0"), "{}", stdout(&out));
}

#[test]
fn pipeline_config_certifies() {
    let out = impiss(&["certify", "--config", config("pipeline.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("all stages passed"));
}

#[test]
fn failing_estimate_exits_two_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("s2_iss.toml")).unwrap().replace("0.6931471805599453", "2.0");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let margins = dir.path().join("margins.csv");
    let out = impiss(&["certify", "--config", path.to_str().unwrap(), "--out", margins.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("FAIL"));
    assert!(margins.exists());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[system]\nmodel = \"scalar-linear\"\na = -1.0\nbogus = 1\n").unwrap();
    let out = impiss(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert_eq!(impiss(&["--help"]).status.code(), Some(0));
}

#[test]
fn suite_subset_is_deterministic() {
    let a = impiss(&["suite", "--only", "gronwall,signals", "--seed", "5"]);
    let b = impiss(&["suite", "--only", "gronwall,signals", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 5);
}
