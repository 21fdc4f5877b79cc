use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
    "data": {"source": "synthetic", "d": 6, "ratio": 4.0},
    "split": {"mode": "iid_fraction", "p": 0.5},
    "agents": [{"kernel": {"family": "linear"}, "c": 0.1},
               {"kernel": {"family": "rbf", "bandwidth": 2.0}, "c": 0.1}],
    "schemes": ["akd", "avgkd"],
    "rounds": 8,
    "seed": 1
}"#;

fn fedkd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedkd"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FEDKD_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.json");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedkd(&["verify", "--instances", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("0 failed"), "{out}");
}

#[test]
fn simulate_without_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedkd(&["simulate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = fedkd(&["simulate", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error [io]"), "{}", stderr(&o));
}

#[test]
fn unknown_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = fedkd(&["simulate", "--config", &cfg, "--set", "bogus=1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error [config]"), "{}", stderr(&o));
}

#[test]
fn simulate_is_reproducible_and_plot_rereads_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    for out in ["a", "b"] {
        let o = fedkd(&["simulate", "--config", &cfg, "--out", out, "--set", "rounds=6"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["metrics.csv", "config.json", "run.json", "plot_test.svg", "plot_train.svg"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let summary = std::fs::read_to_string(dir.path().join("a/run.json")).unwrap();
    assert!(summary.contains("rounds=6"));

    let o = fedkd(&["plot", "--input", "a/metrics.csv", "--out", "replot", "--log-y=false"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(dir.path().join("replot/plot_test.svg")).unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn sweep_writes_one_record_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace(r#""seed": 1"#, r#""seed": 1, "sweep": {"c": [0.01, 0.1, 1.0]}"#);
    let cfg = write_config(dir.path(), &text);
    let o = fedkd(&["sweep", "--config", &cfg, "--out", "sw", "--jobs", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for label in ["c_0.01", "c_0.1", "c_1"] {
        assert!(dir.path().join("sw").join(label).join("metrics.csv").exists(), "{label}");
    }
    let summary = std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let labels: std::collections::BTreeSet<_> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels.len(), 3);

    let o = fedkd(&["sweep", "--config", &cfg, "--jobs", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_data_writes_agent_parts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = fedkd(&["gen-data", "--config", &cfg, "--out", "data"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["train.csv", "test.csv", "agent1.csv", "agent2.csv"] {
        assert!(dir.path().join("data").join(f).exists(), "{f}");
    }
    let o = fedkd(&["gen-data", "--d", "3", "--seed", "4", "--out", "raw"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("raw/data.csv")).unwrap();
    // header plus round(1.5 * 3) = 5 rows
    assert_eq!(text.lines().count(), 6);
}
