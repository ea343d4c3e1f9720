use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_procure-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("procure-lab-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn allocate_prints_nine_digits() {
    let o = run(&["allocate", "--costs", "1,2", "--alpha", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0.800000000,0.200000000\n");

    let o = run(&["allocate", "--costs", "1,1,1,1", "--alpha", "3"]);
    assert_eq!(
        stdout(&o),
        "0.250000000,0.250000000,0.250000000,0.250000000\n"
    );
}

#[test]
fn allocate_rejects_nonpositive_cost() {
    let o = run(&["allocate", "--costs", "1,0", "--alpha", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonpositive cost"));
}

#[test]
fn solve_json_round_trip() {
    let o = run(&[
        "solve",
        "--mechanism",
        "tullock",
        "--costs",
        "1,3",
        "--budget",
        "5",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let x: Vec<f64> = serde_json::from_value(v["allocation"].clone()).unwrap();
    assert!((x[0] - 2.0 / 3.0).abs() <= 1e-9 && (x[1] - 1.0 / 3.0).abs() <= 1e-9);
    assert!((v["poa"].as_f64().unwrap() - 5.0 / 3.0).abs() <= 1e-9);
    assert_eq!(v["mechanism"], "tullock");
    assert!(v["diagnostics"]["v_star"].is_number());

    let o = run(&[
        "solve",
        "--mechanism",
        "pab",
        "--costs",
        "1,1",
        "--alpha",
        "5",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for b in v["bids"].as_array().unwrap() {
        assert!((b.as_f64().unwrap() - 5.0 / 3.0).abs() <= 1e-9);
    }
}

#[test]
fn solve_reports_missing_equilibrium() {
    let o = run(&[
        "solve",
        "--mechanism",
        "tullock",
        "--costs",
        "1,10",
        "--budget",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fewer than two agents with positive value"));
}

#[test]
fn solve_csv_one_row_per_agent() {
    let o = run(&[
        "solve",
        "--mechanism",
        "dsic",
        "--costs",
        "1,2,4",
        "--alpha",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "agent,cost,allocation,bid,payment,utility,social_cost,poa"
    );
    assert_eq!(lines.len(), 4);
}

#[test]
fn verify_exit_codes() {
    let o = run(&[
        "verify",
        "--mechanism",
        "pab",
        "--costs",
        "1,1,1",
        "--alpha",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&[
        "verify",
        "--mechanism",
        "tullock",
        "--costs",
        "1,3",
        "--budget",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&[
        "verify",
        "--mechanism",
        "pab",
        "--costs",
        "1,1",
        "--alpha",
        "5",
        "--bids",
        "1,1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "mechanism=tullock\ncosts=1,3\nbudget=100\n").unwrap();
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--budget",
        "5",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["budget"].as_f64(), Some(5.0));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sweeps() {
    let o = run(&[
        "sweep",
        "--mechanism",
        "tullock",
        "--param",
        "budget",
        "--range",
        "10:1000000:5",
        "--log",
        "--costs",
        "1,2,3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .take(4)
        .map(|s| s.parse().unwrap())
        .collect();
    assert!(last[1..].iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-5));

    let o = run(&[
        "sweep",
        "--mechanism",
        "dsic",
        "--param",
        "alpha",
        "--range",
        "1.5:6:10",
        "--n",
        "2",
    ]);
    for line in stdout(&o).lines().skip(1) {
        let f: Vec<f64> = line
            .split(',')
            .take(5)
            .map(|s| s.parse().unwrap())
            .collect();
        assert!(f[3] <= f[4]);
    }

    let o = run(&[
        "sweep",
        "--mechanism",
        "pab",
        "--param",
        "C",
        "--range",
        "1:2:3",
        "--n",
        "16",
        "--alpha",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("n,C,poa,error"));

    let o = run(&[
        "sweep",
        "--mechanism",
        "tullock",
        "--param",
        "alpha",
        "--range",
        "1:2:3",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn figures_are_byte_identical() {
    let dir = scratch("fig");
    for round in ["a", "b"] {
        let o = run(&["figure", "1", "--out", dir.join(round).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(dir.join("a/fig1.csv")).unwrap();
    let b = std::fs::read(dir.join("b/fig1.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("alpha,c2,x1,x2,social_cost,error\n"));
    assert_eq!(text.lines().count(), 801);
    let row = text
        .lines()
        .find(|l| l.starts_with("8.00000000,10.0000000,"))
        .unwrap();
    let x1: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(x1 > 0.99);
    std::fs::remove_dir_all(dir).unwrap();

    let o = run(&["figure", "9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn worst_case_and_selftest_run() {
    let o = run(&[
        "worst-case",
        "--mechanism",
        "dsic",
        "--n",
        "2",
        "--alpha",
        "2",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["worst_case"]["worst_social_cost"].as_f64().unwrap() - 1.207_106_78).abs() < 1e-8);

    let o = run(&["selftest"]);
    assert!(stdout(&o).lines().count() >= 10);
    assert!(matches!(o.status.code(), Some(0) | Some(3)));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        run(&["solve", "--mechanism", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["allocate", "--costs", "1,2"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
