use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pmcvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmcvar")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen(dir: &Path, n: usize, t: usize, blocks: usize, seed: u64) -> String {
    let d = dir.to_str().unwrap();
    ok(&pmcvar(&[
        "gen",
        "--n",
        &n.to_string(),
        "--t",
        &t.to_string(),
        "--blocks",
        &blocks.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        d,
    ]));
    dir.join("prices.csv").to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn info_summarises_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 3, 30, 1, 1);
    let text = ok(&pmcvar(&["info", "--prices", &prices]));
    assert!(text.contains("assets        3"));
    assert!(text.contains("returns       30"));
    assert!(text.contains("max rho"));

    let one = dir.path().join("one.csv");
    fs::write(&one, "date,X\n2020-01-01,10\n2020-01-08,11\n2020-01-15,10.5\n").unwrap();
    let text = ok(&pmcvar(&["info", "--prices", one.to_str().unwrap()]));
    assert!(text.contains("assets        1"));
    assert!(text.contains("correlation   n/a"));

    let out = pmcvar(&["info", "--prices", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"model": {"p": 2}, "colour": "blue"}"#).unwrap();
    assert_eq!(pmcvar(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(pmcvar(&["solve", "--beta", "1.5"]).status.code(), Some(2));
    assert_eq!(pmcvar(&["solve", "--p", "nine"]).status.code(), Some(2));
    assert_eq!(pmcvar(&["frobnicate"]).status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,A\n2020-01-01,1\n2020-01-08,0\n").unwrap();
    assert_eq!(pmcvar(&["info", "--prices", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn solve_writes_portfolio_json() {
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 6, 60, 2, 3);
    let out = dir.path().join("all");
    let text = ok(&pmcvar(&["solve", "--prices", &prices, "--p", "6", "--out", out.to_str().unwrap()]));
    let doc = read_json(&out.join("portfolio.json"));
    assert_eq!(doc["portfolio"]["representatives"].as_array().unwrap().len(), 6);
    assert_eq!(doc["status"], "optimal");
    assert!(text.contains("representatives B0A0 B0A1 B0A2 B1A3 B1A4 B1A5"));
    assert!(doc["config"]["beta"].as_f64() == Some(0.05));
    assert!(doc["bounds"]["fp0"].is_number());
}

#[test]
fn gamma_zero_matches_cardinality_model() {
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 8, 80, 2, 5);
    let (a, b) = (dir.path().join("u"), dir.path().join("c"));
    let common = ["--prices", prices.as_str(), "--p", "3", "--gap-tol", "1e-10"];
    ok(&pmcvar(&[&["solve", "--gamma", "0", "--out", a.to_str().unwrap()], &common[..]].concat()));
    ok(&pmcvar(&[&["solve", "--strategy", "cvar_cc", "--out", b.to_str().unwrap()], &common[..]].concat()));
    let u = read_json(&a.join("portfolio.json"))["objective"].as_f64().unwrap();
    let c = read_json(&b.join("portfolio.json"))["objective"].as_f64().unwrap();
    assert!((u - c).abs() <= 1e-8, "{u} vs {c}");
}

#[test]
fn tiny_time_limit_returns_incumbent() {
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 40, 104, 4, 9);
    let out = dir.path().join("tl");
    let text = ok(&pmcvar(&[
        "solve",
        "--prices",
        &prices,
        "--p",
        "5",
        "--gamma",
        "0.5",
        "--time-limit",
        "0.001",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(text.contains("feasible_time_limit"), "{text}");
    let doc = read_json(&out.join("portfolio.json"));
    assert_eq!(doc["status"], "feasible_time_limit");
    assert!(doc["gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn infeasible_floor_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 5, 40, 1, 2);
    let out = pmcvar(&[
        "solve",
        "--prices",
        &prices,
        "--p",
        "2",
        "--mu0",
        "0.5",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let out = pmcvar(&[
        "backtest",
        "--prices",
        &prices,
        "--p",
        "2",
        "--mu0",
        "0.5",
        "--in-len",
        "20",
        "--out-len",
        "10",
        "--out",
        dir.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solver_failure_exits_4() {
    // One simplex iteration cannot finish any relaxation.
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 10, 60, 2, 4);
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        format!(r#"{{"prices": {:?}, "model": {{"p": 3}}, "solver": {{"lp": {{"max_iters": 1}}}}}}"#, prices),
    )
    .unwrap();
    let out = pmcvar(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("z").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn backtest_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 10, 120, 2, 6);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec![
            "backtest",
            "--prices",
            prices.as_str(),
            "--in-len",
            "52",
            "--out-len",
            "26",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        ok(&pmcvar(&args));
        out
    };
    let a = run("a", &["--p-list", "2,3,4,5", "--gamma", "0.5"]);
    let b = run("b", &["--p-list", "2,3,4,5", "--gamma", "0.5", "--threads", "1"]);
    let csv = fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv, fs::read_to_string(b.join("report.csv")).unwrap());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    let reports = read_json(&a.join("report.json"));
    assert_eq!(reports.as_array().unwrap().len(), 4);

    let idx = run("i", &["--strategy", "index"]);
    let csv = fs::read_to_string(idx.join("report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "index");
    assert_eq!(&row[6..], &["", ""]);
}

#[test]
fn compare_marks_rows() {
    let dir = tempfile::tempdir().unwrap();
    let prices = gen(dir.path(), 9, 130, 3, 12);
    let out = dir.path().join("cmp");
    ok(&pmcvar(&[
        "compare",
        "--prices",
        &prices,
        "--p-list",
        "2,3",
        "--gammas",
        "1,0.5,0",
        "--in-len",
        "52",
        "--out-len",
        "26",
        "--out",
        out.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 2 * (3 + 3));
    for p in ["2", "3"] {
        let group: Vec<&Vec<String>> = rows.iter().filter(|r| r[2] == p).collect();
        let gammas: Vec<&str> = group.iter().filter(|r| r[0] == "unified").map(|r| r[1].as_str()).collect();
        assert_eq!(gammas, ["0", "0.5", "1"]);
        assert_eq!(group.iter().filter(|r| r[9] == "true").count(), 1);
        let best_av = group.iter().map(|r| r[4].parse::<f64>().unwrap()).fold(f64::NEG_INFINITY, f64::max);
        let bold = group.iter().find(|r| r[9] == "true").unwrap();
        assert_eq!(bold[4].parse::<f64>().unwrap(), best_av);
        for r in &group {
            let bench: Vec<&&Vec<String>> = group.iter().filter(|b| b[0] != "unified").collect();
            if r[0] == "unified" {
                let av: f64 = r[4].parse().unwrap();
                let sh: f64 = r[5].parse().unwrap();
                let dominates =
                    bench.iter().all(|b| av > b[4].parse::<f64>().unwrap() && sh > b[5].parse::<f64>().unwrap());
                assert_eq!(r[8], dominates.to_string());
            } else {
                assert_eq!(r[8], "");
            }
        }
    }

    let single = dir.path().join("single");
    ok(&pmcvar(&[
        "compare",
        "--prices",
        &prices,
        "--strategies",
        "unified",
        "--gammas",
        "1,0.5",
        "--in-len",
        "52",
        "--out-len",
        "26",
        "--out",
        single.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(single.join("compare.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",,,")));
}
