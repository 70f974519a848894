use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psinull")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn expand_examples() {
    let out = run(&["expand", "1/2", "--depth", "6"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "p=1;2:0;3:2;4:3;5:4\n");
    assert_eq!(stdout(&run(&["expand", "1", "--depth", "4"])), "p=1;2:1;3:2\n");
    assert_eq!(stdout(&run(&["expand", "1/2", "1/3", "--depth", "4"])), "p=2;2:0,0;3:2,1\n");
}

#[test]
fn usage_errors_exit_2() {
    let out = run(&["expand", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside (0,1]"));
    assert_eq!(run(&["expand", "abc"]).status.code(), Some(2));
    assert_eq!(run(&["measure", "--family", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["certify", "--eps", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["certify", "--t", "1,2"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let dir = std::env::temp_dir().join(format!("psinull-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "eps = \"small\"\n").unwrap();
    assert_eq!(run(&["certify", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert_eq!(run(&["certify", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn certify_exact_and_bounded() {
    let out = run(&["certify", "--family", "sawyer_line", "--lambda", "0.3", "--eps", "0.05", "--t", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["result"]["k"], 4);
    assert_eq!(v["result"]["N"], "67");
    assert_eq!(v["result"]["verified"], true);

    let out = run(&["certify", "--eps", "0.001"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["mode"], "bounded");
    assert!(v["result"]["N"]["lo_ln"].is_object());

    let forced = json(&run(&["certify", "--mode", "bounded"]));
    assert_eq!(forced["result"]["mode"], "bounded");
    assert_eq!(run(&["certify", "--eps", "0.001", "--mode", "exact"]).status.code(), Some(1));
}

#[test]
fn infeasible_level_names_the_condition() {
    let out = run(&["certify", "--lambda", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("condition 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn measure_is_reproducible() {
    let args = ["measure", "--truncations", "4,67", "--samples", "2000", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with(&format!("# psinull {} config=", env!("CARGO_PKG_VERSION"))));
    assert!(lines[0].ends_with("seed=7"));
    assert_eq!(lines[1], "N,delta,y_samples,t_samples,cells,measure_upper,cert_log_bound");
    assert_eq!(lines.len(), 4);
    let measure = |line: &str| line.split(',').nth(5).unwrap().parse::<f64>().unwrap();
    assert!(measure(lines[3]) < measure(lines[2]));

    let seq = run(&["measure", "--truncations", "4,67", "--samples", "2000", "--seed", "7", "--sequential"]);
    assert_eq!(seq.stdout, a.stdout);
    let other = run(&["measure", "--truncations", "4,67", "--samples", "2000", "--seed", "8"]);
    assert_ne!(other.stdout, a.stdout);

    let dir = std::env::temp_dir().join(format!("psinull-empty-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("empty.toml");
    std::fs::write(&cfg, "truncations = []\n").unwrap();
    let empty = run(&["measure", "--config", cfg.to_str().unwrap()]);
    assert!(empty.status.success(), "{}", String::from_utf8_lossy(&empty.stderr));
    let text = stdout(&empty);
    assert_eq!(text.lines().skip(1).collect::<Vec<_>>(), ["N,delta,y_samples,t_samples,cells,measure_upper,cert_log_bound"]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = std::env::temp_dir().join(format!("psinull-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "family = \"twist_pair\"\neps = 0.02\nseed = 3\n").unwrap();
    let out = run(&["certify", "--config", cfg.to_str().unwrap(), "--eps", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["result"]["family"], "twist_pair");
    assert_eq!(v["result"]["epsilon"], 0.01);

    let report = dir.join("out.json");
    let out = run(&["validate", "--family", "bent_line", "--output", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["result"]["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn psi_and_demo() {
    let v = json(&run(&["psi", "1/2", "-n", "6"]));
    assert_eq!(v["result"]["N"], 6);
    assert_eq!(v["result"]["digits"], "p=1;2:0;3:2;4:3;5:4");
    let out = run(&["demo"]);
    assert!(out.status.success());
    let rows = json(&out)["result"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["validated"] == true));
}
