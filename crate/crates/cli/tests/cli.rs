use std::path::Path;
use std::process::{Command, Output};

fn sqrobust(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sqrobust"));
    cmd.args(args).env_remove("SQROBUST_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("SQROBUST_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn json_stdout(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

#[test]
fn quadrature_defaults_and_node_values() {
    let report = json_stdout(&sqrobust(&["quadrature"], None));
    assert_eq!(report["schemaVersion"], 1);
    assert_eq!(report["command"], "quadrature");
    assert_eq!(report["configHash"].as_str().unwrap().len(), 64);
    assert_eq!(report["config"]["mMax"], 8);
    let rows = report["rows"].as_array().unwrap();
    let m3: Vec<f64> =
        rows.iter().filter(|r| r["m"] == 3).map(|r| r["node"].as_f64().unwrap()).collect();
    assert_eq!(m3.len(), 3);
    assert!((m3[2] - 3f64.sqrt()).abs() < 1e-12);
    assert!(m3[1].abs() < 1e-12);
}

#[test]
fn invalid_order_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.json", r#"{"mMin": 0, "mMax": 3}"#);
    let out = sqrobust(&["quadrature", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_field_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.json", r#"{"mMax": 3, "colour": "red"}"#);
    assert_eq!(sqrobust(&["quadrature", "--config", &cfg], None).status.code(), Some(2));
    let missing = dir.path().join("nope.json").display().to_string();
    assert_eq!(sqrobust(&["quadrature", "--config", &missing], None).status.code(), Some(2));
    assert_eq!(sqrobust(&["quadrature", "--format", "xml"], None).status.code(), Some(2));
}

#[test]
fn infeasible_family_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "i.json",
        r#"{"instance": {"d": 8, "k": 4, "m": 2, "familySize": 8, "epsOrth": 0.05, "maxRetries": 20}, "samplesPerClass": 5}"#,
    );
    let out_dir = dir.path().join("out").display().to_string();
    let out = sqrobust(&["instance", "--config", &cfg, "--out", &out_dir], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn instance_samples_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "i.json",
        r#"{"instance": {"d": 16, "k": 2, "m": 3, "familySize": 2, "epsOrth": 0.9}, "samplesPerClass": 50}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for target in [&a, &b] {
        let out = sqrobust(&["instance", "--config", &cfg, "--seed", "5", "--out", target.to_str().unwrap()], None);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let sa = std::fs::read(a.join("samples.csv")).unwrap();
    assert_eq!(sa, std::fs::read(b.join("samples.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("instance.json")).unwrap(), std::fs::read(b.join("instance.json")).unwrap());

    let text = String::from_utf8(sa).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 100);
    for (i, line) in lines.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 17);
        assert_eq!(cells[16], if i < 50 { "0" } else { "1" });
        assert!(cells[..16].iter().all(|c| c.parse::<f64>().is_ok()));
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["config"]["instance"]["seed"], 5);
}

#[test]
fn rotated_instance_pads_to_power_of_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "i.json",
        r#"{"instance": {"d": 60, "k": 2, "m": 2, "familySize": 1, "rotated": true}, "samplesPerClass": 3}"#,
    );
    let out_dir = dir.path().join("out");
    let out = sqrobust(&["instance", "--config", &cfg, "--out", out_dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let value = |key: &str| {
        report["rows"].as_array().unwrap().iter().find(|r| r["key"] == key).unwrap()["value"].clone()
    };
    assert_eq!(value("inputDim"), 64);
    assert_eq!(value("padding"), 4);
    let first = std::fs::read_to_string(out_dir.join("samples.csv")).unwrap();
    assert_eq!(first.lines().next().unwrap().split(',').count(), 65);
}

#[test]
fn csv_report_goes_to_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqrobust(&["quadrature", "--format", "csv"], Some(dir.path()));
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("quadrature.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schemaVersion=1 command=quadrature"));
    assert_eq!(lines.next().unwrap(), "m,index,node,weight");
    assert_eq!(lines.next().unwrap(), "1,0,0,1");
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"instance": {"d": 8, "k": 1, "m": 2, "familySize": 2, "epsOrth": 0.95}, "mcSamples": 20000}"#,
    );
    let one = json_stdout(&sqrobust(&["chi", "--config", &cfg, "--threads", "1"], None));
    let three = json_stdout(&sqrobust(&["chi", "--config", &cfg, "--threads", "3"], None));
    assert_eq!(one["rows"], three["rows"]);
    assert_eq!(one["rows"][0]["kind"], "sameAnalytic");
}

#[test]
fn robustness_table_shows_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"instance": {"d": 32, "k": 4, "m": 6, "familySize": 1, "rho": 0.1},
            "trainPerClass": 100, "testPerClass": 300, "nnTestPerClass": 20, "epsilons": [0.0, 0.2]}"#,
    );
    let report = json_stdout(&sqrobust(&["robustness", "--config", &cfg], None));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let get = |name: &str, eps: f64| {
        rows.iter().find(|r| r["classifier"] == name && r["epsilon"].as_f64() == Some(eps)).unwrap()["maxLoss"]
            .as_f64()
            .unwrap()
    };
    assert!(get("linear", 0.0) <= 0.02);
    assert!(get("linear", 0.2) >= 0.99);
    assert!(get("setVote", 0.2) <= 0.1);
    assert_eq!(rows[0]["method"], "certified");
}

#[test]
fn sq_zero_budget_and_ledger_export() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join("ledger.jsonl");
    let cfg = write_config(
        dir.path(),
        "s.json",
        &format!(
            r#"{{"instance": {{"d": 8, "k": 1, "m": 2, "familySize": 2, "epsOrth": 0.95}},
                "taus": [0.2], "modes": ["honest"], "strategies": ["aligned"], "budget": 2, "trials": 4,
                "ledger": {:?}}}"#,
            ledger.display().to_string()
        ),
    );
    let report = json_stdout(&sqrobust(&["sq", "--config", &cfg], None));
    assert_eq!(report["rows"][0]["trials"], 4);
    let lines = std::fs::read_to_string(&ledger).unwrap();
    let entries: Vec<serde_json::Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(entries.len(), 2);
    for key in ["queryIndex", "description", "u", "v", "modeUsed", "camouflageBroken"] {
        assert!(entries[0].get(key).is_some(), "{key}");
    }

    let cfg = write_config(
        dir.path(),
        "s0.json",
        r#"{"instance": {"d": 8, "k": 1, "m": 2, "familySize": 2, "epsOrth": 0.95},
            "taus": [0.2], "modes": ["camouflage"], "strategies": ["randomHalfspace"], "budget": 0, "trials": 10}"#,
    );
    let report = json_stdout(&sqrobust(&["sq", "--config", &cfg], None));
    assert_eq!(report["rows"][0]["queries"], 0);
    assert_eq!(report["rows"][0]["withinBand"], true);
}

#[test]
fn cover_and_erm_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"members": [
              {"first": [[0.0]], "second": [[0.0]]},
              {"first": [[0.1]], "second": [[0.1]]},
              {"first": [[5.0]], "second": [[5.0]]}],
            "eps": 0.2, "delta": 0.0}"#,
    );
    let report = json_stdout(&sqrobust(&["cover", "--config", &cfg], None));
    assert_eq!(report["results"]["greedy"]["size"], 2);
    assert_eq!(report["results"]["exactSize"], 2);

    let cfg = write_config(
        dir.path(),
        "e.json",
        r#"{"instance": {"d": 16, "k": 2, "m": 3, "familySize": 4, "epsOrth": 0.9},
            "heldOutPerClass": 200, "trials": 2}"#,
    );
    let report = json_stdout(&sqrobust(&["erm", "--config", &cfg], None));
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert_eq!(report["results"]["samplesPerClass"], (40.0 * 4f64.ln()).ceil() as u64);
}
