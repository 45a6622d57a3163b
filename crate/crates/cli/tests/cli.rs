use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use veto_core::synthetic::{planted_bottoming_tail, random_walk};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn veto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veto"))
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

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn regime() -> String {
    fixture("regime_daily_800.csv").to_string_lossy().into_owned()
}

fn btc() -> String {
    fixture("btc_daily_110.csv").to_string_lossy().into_owned()
}

#[test]
fn validate_counts_candles() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(fixture("btc_daily_110.csv")).unwrap();
    let head: Vec<&str> = text.lines().take(91).collect();
    let p = write_file(&dir, "d.csv", &(head.join("\n") + "\n"));
    let o = veto(&["validate", "--data", path_str(&p)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "OK 90 candles\n");
}

#[test]
fn validate_reports_offending_row() {
    let dir = TempDir::new().unwrap();
    let csv = "timestamp,open,high,low,close,volume\n\
               2024-01-01,10,11,9,10,5\n\
               2024-01-02,10,11,9,10,5\n\
               2024-01-03,10,8,9,10,5\n";
    let p = write_file(&dir, "bad.csv", csv);
    let o = veto(&["validate", "--data", path_str(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn validate_empty_file() {
    let dir = TempDir::new().unwrap();
    let p = write_file(&dir, "empty.csv", "");
    let o = veto(&["validate", "--data", path_str(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty input"));
}

#[test]
fn missing_data_is_usage_error() {
    assert_eq!(veto(&["validate"]).status.code(), Some(2));
    assert_eq!(veto(&["frobnicate"]).status.code(), Some(2));
    let o = veto(&["backtest", "--data", &regime(), "--forecaster", "arima"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rules_scan_finds_planted_tail() {
    let dir = TempDir::new().unwrap();
    let series = planted_bottoming_tail(150, 120, 3);
    let p = write_file(&dir, "planted.csv", &series.to_csv());
    let o = veto(&["rules-scan", "--data", path_str(&p)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let blocks: Vec<&str> = out.lines().filter(|l| l.contains(" index ")).collect();
    assert_eq!(blocks.len(), 1, "{out}");
    assert!(blocks[0].ends_with(" index 120"), "{out}");
    assert!(out.contains("  bottoming_tail_candle: PASS"));
    assert!(out.ends_with("1 match\n"));
}

#[test]
fn rules_scan_all_prints_every_window() {
    let dir = TempDir::new().unwrap();
    let p = write_file(&dir, "rw.csv", &random_walk(100, 0.02, 5).to_csv());
    let o = veto(&["rules-scan", "--data", path_str(&p), "--all"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.contains(" index ")).count(), 11);
    // each block lists all six predicates and the rule outcome
    assert_eq!(out.lines().filter(|l| l.starts_with("  ")).count(), 11 * 7);

    let o = veto(&["rules-scan", "--data", path_str(&p), "--all", "--format", "csv"]);
    assert_eq!(stdout(&o).lines().count(), 12);
    let o = veto(&["rules-scan", "--data", path_str(&p), "--all", "--format", "json"]);
    for line in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["verdict"]["trace"].as_array().unwrap().len(), 6);
    }
}

#[test]
fn rules_scan_without_matches() {
    let o = veto(&["rules-scan", "--data", &regime()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0 matches\n");
}

#[test]
fn rules_scan_short_series_fails() {
    let dir = TempDir::new().unwrap();
    let p = write_file(&dir, "short.csv", &random_walk(50, 0.02, 1).to_csv());
    let o = veto(&["rules-scan", "--data", path_str(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("insufficient history"));
}

#[test]
fn backtest_reports_four_rows() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let trace = dir.path().join("trace.csv");
    let o = veto(&[
        "backtest",
        "--data",
        &regime(),
        "--report",
        path_str(&report),
        "--trace",
        path_str(&trace),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let got: Vec<(String, String)> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["model"].as_str().unwrap().to_string(), r["side"].as_str().unwrap().to_string()))
        .collect();
    let want = [("drift", "Up"), ("drift + gate", "Up"), ("drift", "Down"), ("drift + gate", "Down")];
    assert_eq!(got, want.map(|(m, s)| (m.to_string(), s.to_string())));

    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("origin_timestamp,step,predicted,lower,upper,actual,executed\n"));
    let table = stdout(&o);
    assert!(table.starts_with("Models"));
    // one row per evaluated origin and step
    let evaluated: usize = table
        .lines()
        .find(|l| l.contains("origins evaluated"))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(trace.lines().count(), 1 + evaluated * 7);
}

#[test]
fn backtest_threshold_one_executes_nothing() {
    let o = veto(&["backtest", "--data", &regime(), "--threshold", "1.0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let gated: Vec<&str> = out.lines().filter(|l| l.contains("+ gate")).collect();
    assert_eq!(gated.len(), 2);
    for l in gated {
        assert!(l.contains('—') && l.trim_end().ends_with(" 0%"), "{l}");
    }
}

#[test]
fn backtest_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str| {
        let report = dir.path().join(format!("r{tag}.csv"));
        let trace = dir.path().join(format!("t{tag}.csv"));
        let o = veto(&[
            "backtest",
            "--data",
            &regime(),
            "--seed",
            "11",
            "--format",
            "csv",
            "--report",
            path_str(&report),
            "--trace",
            path_str(&trace),
        ]);
        assert_eq!(o.status.code(), Some(0));
        (
            o.stdout,
            std::fs::read(report).unwrap(),
            std::fs::read(trace).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn report_rerenders_saved_csv() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.csv");
    let o = veto(&["backtest", "--data", &regime(), "--format", "csv", "--report", path_str(&report)]);
    let table = stdout(&o);
    let table = table.split("\n\n").next().unwrap().to_string() + "\n";
    let r = veto(&["report", "--input", path_str(&report)]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(stdout(&r), table);
}

#[test]
fn saved_gate_replays_in_backtest() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("gate.json");
    let o = veto(&["train-gate", "--data", &regime(), "--out", path_str(&model)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["feature_names"].as_array().unwrap().len(), 8);

    let o = veto(&["backtest", "--data", &regime(), "--gate-model", path_str(&model), "--threshold", "0.6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("at threshold 0.6"));

    // a required rule that never passes vetoes every call
    let o = veto(&[
        "backtest",
        "--data",
        &regime(),
        "--gate-model",
        path_str(&model),
        "--require",
        "bottoming_tail_candle",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(", 0 executed"));

    let o = veto(&["backtest", "--data", &regime(), "--require", "no_such_rule"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exported_forecasts_replay_as_external() {
    let dir = TempDir::new().unwrap();
    let preds = dir.path().join("drift.csv");
    let o = veto(&["forecast", "--data", &regime(), "--all", "--out", path_str(&preds)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let external = format!("external:{}", path_str(&preds));
    let a = stdout(&veto(&["backtest", "--data", &regime()]));
    let b = stdout(&veto(&["backtest", "--data", &regime(), "--forecaster", &external]));
    assert_eq!(a, b);
}

#[test]
fn forecast_at_named_origin() {
    let o = veto(&["forecast", "--data", &btc(), "--horizon", "3", "--at", "2023-04-20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().skip(1).all(|l| l.starts_with("2023-04-20,")));
    let o = veto(&["forecast", "--data", &btc(), "--at", "1999-01-01"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn prompt_matches_golden() {
    let golden = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/btc_prompt.txt"),
    )
    .unwrap();
    let o = veto(&["prompt", "--data", &btc()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), golden);
    assert!(golden.contains(
        "The input has a minimum value of 26511.2 and a maximum value of 49011.4, with an average value of 39621.6."
    ));
}

#[test]
fn prompt_horizon_flag() {
    let o = veto(&["prompt", "--data", &btc(), "--horizon", "3"]);
    assert!(stdout(&o).contains("Predict the data for the next 3 steps given the previous 110 steps."));
}

#[test]
fn prompt_file_equals_stdout() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("prompt.txt");
    let o = veto(&["prompt", "--data", &btc(), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let direct = veto(&["prompt", "--data", &btc()]).stdout;
    assert_eq!(std::fs::read(&out).unwrap(), direct);
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = write_file(
        &dir,
        "run.json",
        &format!(r#"{{"data": {:?}, "horizon": 3}}"#, btc()),
    );
    let o = veto(&["prompt", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("next 3 steps"));
    let o = veto(&["prompt", "--config", path_str(&cfg), "--horizon", "5"]);
    assert!(stdout(&o).contains("next 5 steps"));

    let bad = write_file(&dir, "bad.json", r#"{"horizn": 3}"#);
    assert_eq!(veto(&["prompt", "--config", path_str(&bad)]).status.code(), Some(2));
}
