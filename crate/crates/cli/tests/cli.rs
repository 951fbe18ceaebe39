use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dynkin_core::config::Problem;
use dynkin_core::corpus::example;
use dynkin_core::io::read_value_csv;
use serde_json::Value;

fn dynkin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynkin")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, id: &str, n: usize) -> String {
    let p = example(id).unwrap().problem.with_grid_n(n).unwrap();
    let path = dir.join(format!("{id}.json"));
    fs::write(&path, serde_json::to_string_pretty(&p.to_json()).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn malformed_field_exits_one_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ex_4_4", 201);
    let mut v: Value = json(Path::new(&cfg));
    v["diffusion"]["r"] = Value::String("fast".into());
    fs::write(&cfg, v.to_string()).unwrap();
    let out = dynkin(&["--mode", "solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diffusion.r"));
}

#[test]
fn broken_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"diffusion\": {\n    \"r\": 0.1,,\n  }\n}\n").unwrap();
    let out = dynkin(&["--mode", "solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_example_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynkin(&["--mode", "solve", "--example", "ex_9_9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ex_4_2"));
}

#[test]
fn value_csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ex_5_1", 1601);
    let out_dir = dir.path().join("o");
    let out = dynkin(&["--mode", "solve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let table = read_value_csv(fs::File::open(out_dir.join("value.csv")).unwrap()).unwrap();
    let solved = Problem::from_json_str(&fs::read_to_string(&cfg).unwrap()).unwrap().solve().unwrap();
    assert_eq!(table.v.len(), solved.sol.v.len());
    for (a, b) in table.v.iter().zip(&solved.sol.v) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in table.x.iter().zip(&solved.sol.grid) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(table.in_d1, solved.sol.d1_mask);

    let bounds = json(&out_dir.join("boundaries.json"));
    let b = bounds["free_boundaries"]["d1"][1].as_f64().unwrap();
    assert!((b - 4.618).abs() < 1e-2);
}

#[test]
fn verify_example_5_2_is_sufficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynkin(&["--mode", "verify", "--example", "ex_5_2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("verdict.json"));
    assert_eq!(v["sufficient"], Value::Bool(true));
    assert_eq!(v["nonexistence"], Value::Bool(false));
    assert!(v["max_gain_p1"].as_f64().unwrap() < 1e-4);
    assert!(v["max_gain_p2"].as_f64().unwrap() < 1e-4);
    assert!(dir.path().join("best_response.csv").exists());
}

#[test]
fn simulation_output_is_deterministic() {
    let run = |tag: &str, threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_dynkin"))
            .args(["--mode", "simulate", "--example", "ex_4_4", "--paths", "2000", "--dt", "1e-3", "--seed", "9"])
            .args(["--out", dir.path().to_str().unwrap()])
            .env("DYNKIN_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{tag}: {}", String::from_utf8_lossy(&out.stderr));
        (
            fs::read(dir.path().join("report.json")).unwrap(),
            fs::read(dir.path().join("strategy_p1.json")).unwrap(),
        )
    };
    let a = run("a", "1");
    let b = run("b", "4");
    assert_eq!(a, b);
}

#[test]
fn strategies_for_example_4_3_carry_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynkin(&["--mode", "strategies", "--example", "ex_4_3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let s = json(&dir.path().join("strategy_p2.json"));
    assert_eq!(s["kind"], "nash");
    let atoms = s["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 1);
    assert_eq!(atoms[0][0].as_f64(), Some(2.0));
    assert_eq!(atoms[0][1].as_f64(), Some(0.25));
}

#[test]
fn examples_mode_for_one_entry_writes_a_passing_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynkin(&["--mode", "examples", "--example", "ex_4_2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("examples_summary.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("ex_4_2,") && rows[1].ends_with(",pass"));
}
