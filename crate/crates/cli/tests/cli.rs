use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stretchwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stretchwalk"))
        .args(args)
        .env("STRETCHWALK_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = stretchwalk(&["bounds", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(stretchwalk(&[]).status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let out = stretchwalk(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("localize"));
}

#[test]
fn bounds_agree_with_oracle() {
    let out = stretchwalk(&[
        "bounds",
        "--model",
        "weibull:k=3",
        "--n",
        "4",
        "--a",
        "3",
        "--eps",
        "0.5",
        "--oracle",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = &doc["rows"][0];
    let closed = row["I_icc"].as_f64().unwrap();
    let brute = row["oracle_I_icc"].as_f64().unwrap();
    assert!((closed - brute).abs() <= 1e-4 * closed);
    assert_eq!(doc["seed"], "1");
}

#[test]
fn conditions_example_trend() {
    let out = stretchwalk(&[
        "conditions",
        "--plan",
        "example1-case2",
        "--beta",
        "3",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# trend_ratio32=Decreasing"));
    assert!(text.contains("n,a,eps,ratio_growth,ratio32,ratio33,H,G"));
    let last = text.lines().last().unwrap();
    let r32: f64 = last.split(',').nth(4).unwrap().parse().unwrap();
    assert!(r32 < 1e-2);
}

#[test]
fn numeric_failures_exit_2_with_error_name() {
    let out = stretchwalk(&["paths", "--n", "10", "--k", "50", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BadWindow"));
}

#[test]
fn reruns_are_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let p = d.path().to_str().unwrap();
        let out = stretchwalk(&[
            "paths", "--n", "100,200", "--trials", "30", "--seed", "11", "--out", p,
        ]);
        assert_eq!(out.status.code(), Some(0));
        let out = stretchwalk(&[
            "localize", "--n", "4,6", "--a", "2,3", "--trials", "400", "--seed", "11", "--out", p,
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["paths.csv", "trajectory.csv", "slopes.csv", "localize.csv"] {
        assert_eq!(read(d1.path(), f), read(d2.path(), f), "{f}");
    }
    assert!(read(d1.path(), "localize.csv").starts_with("# command=localize\n# seed=11\n"));
    let meta: Value = serde_json::from_str(&read(d1.path(), "run_meta.json")).unwrap();
    assert!(meta["unix_time"].as_u64().unwrap() > 0);
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_stretchwalk"))
            .args([
                "localize", "--n", "5", "--a", "3", "--method", "is", "--trials", "3000", "--seed",
                "4",
            ])
            .env("STRETCHWALK_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn seed_changes_output() {
    let run = |seed: &str| {
        stretchwalk(&[
            "localize", "--n", "5", "--a", "3", "--method", "is", "--trials", "3000", "--seed",
            seed,
        ])
        .stdout
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn config_file_overrides_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"model": "power:beta=3", "n": [2, 3], "a": 2, "eps": 0.5, "format": "csv"}"#,
    )
    .unwrap();
    let out = stretchwalk(&[
        "bounds",
        "--model",
        "weibull:k=3",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# model=power:beta=3"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn json_mirrors_csv() {
    let csv = String::from_utf8(stretchwalk(&["rate", "--a", "3"]).stdout).unwrap();
    let json: Value =
        serde_json::from_slice(&stretchwalk(&["rate", "--a", "3", "--format", "json"]).stdout)
            .unwrap();
    let rows: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), json["rows"].as_array().unwrap().len());
    let first_i: f64 = rows[0].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(first_i, json["rows"][0]["I"].as_f64().unwrap());
}
