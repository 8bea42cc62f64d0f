//! End-to-end checks of the command-line surface: formats, file outputs,
//! trace export and exit codes.

use std::process::Command;

fn paro(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_paro"))
        .args(args)
        .output()
        .expect("run paro")
}

#[test]
fn plan_csv_has_expected_header() {
    let out = paro(&[
        "plan", "--regime", "full", "--params", "7e9", "--gpus", "64", "--group", "8", "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(
        "code,alias,recommended,passes_p1,passes_p2,passes_p3,memory_bytes,intra_params,inter_params,est_time_s"
    ));
    assert_eq!(text.lines().count(), 15);
}

#[test]
fn simulate_csv_summary_columns() {
    let out = paro(&[
        "simulate", "--topo", "ho-ring", "--ranks", "9", "--group", "3", "--bytes", "9216",
        "--format", "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .starts_with("topology,collective,ranks,group_size,bytes_intra,bytes_inter,rounds,time_s"));
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join("paro_cli_test_out");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("savings.json");
    let out = paro(&[
        "cost",
        "--savings",
        "--params",
        "7e9",
        "--gpus",
        "64",
        "--groups",
        "8",
        "--accum",
        "8",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(saved["savings_params"], 5_359_375_000u64);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn trace_out_is_one_json_round_per_line() {
    let dir = std::env::temp_dir().join("paro_cli_test_trace");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trace.jsonl");
    let out = paro(&[
        "simulate",
        "--topo",
        "ho-ring",
        "--ranks",
        "9",
        "--group",
        "3",
        "--bytes",
        "9216",
        "--trace-out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    for (i, line) in lines.iter().enumerate() {
        let round: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(round["round"], i);
        assert!(!round["messages"].as_array().unwrap().is_empty());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_breach_exits_nonzero_naming_strategy() {
    // An impossible tolerance forces the failure path.
    let out = paro(&[
        "verify",
        "--strategy",
        "IIG",
        "--gpus",
        "4",
        "--group",
        "2",
        "--accum",
        "2",
        "--steps",
        "3",
        "--tolerance",
        "1e-30",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("IIG"),
        "stderr should name the strategy: {err}"
    );
    assert!(err.contains("max diff"));
}

#[test]
fn unknown_regime_is_usage_error() {
    let out = paro(&["plan", "--regime", "huge", "--params", "1e6", "--gpus", "8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_compare_block_orders_topologies() {
    let out = paro(&[
        "simulate",
        "--topo",
        "ho-ring",
        "--ranks",
        "128",
        "--group",
        "8",
        "--bytes",
        "1e9",
        "--compare",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let times = &v["comparison"]["times_s"];
    assert!(times["ho_ring"].as_f64().unwrap() < times["h_ring"].as_f64().unwrap());
    assert!(times["h_ring"].as_f64().unwrap() < times["ring"].as_f64().unwrap());
}
