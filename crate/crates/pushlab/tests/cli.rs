//! End-to-end exercise of the command-line interface: import a capture,
//! generate and validate a strategy, run a small matrix, and compare rows.

use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn pushlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pushlab"))
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn har() -> String {
    let html = "<html><head><link rel=\"stylesheet\" href=\"/style.css\"></head>\
                <body><img src=\"/pic.png\"><p>hello</p></body></html>";
    json!({
        "log": {
            "entries": [
                {
                    "serverIPAddress": "203.0.113.7",
                    "request": { "method": "GET", "url": "https://shop.test/", "headers": [] },
                    "response": {
                        "status": 200,
                        "headers": [{ "name": "Content-Type", "value": "text/html" }],
                        "content": { "text": html }
                    }
                },
                {
                    "serverIPAddress": "203.0.113.7",
                    "request": { "method": "GET", "url": "https://shop.test/style.css", "headers": [] },
                    "response": {
                        "status": 200,
                        "headers": [{ "name": "Content-Type", "value": "text/css" }],
                        "content": { "text": "body { color: red }" }
                    }
                },
                {
                    "serverIPAddress": "203.0.113.7",
                    "request": { "method": "GET", "url": "https://shop.test/pic.png", "headers": [] },
                    "response": {
                        "status": 200,
                        "headers": [{ "name": "Content-Type", "value": "image/png" }],
                        "content": { "text": "UE5HZGF0YQ==", "encoding": "base64" }
                    }
                }
            ]
        }
    })
    .to_string()
}

#[test]
fn import_generate_validate_run_compare() {
    let dir = tempfile::tempdir().unwrap();
    let har_path = dir.path().join("capture.har");
    let archive_path = dir.path().join("site.jsonl");
    write(&har_path, &har());

    let out = pushlab()
        .args(["import", "--har"])
        .arg(&har_path)
        .arg("--out")
        .arg(&archive_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "import failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 exchanges"));

    let strategy_path = dir.path().join("push_all.json");
    let out = pushlab()
        .args(["strategy", "--archive"])
        .arg(&archive_path)
        .args(["--kind", "push_all", "--out"])
        .arg(&strategy_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "strategy failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = pushlab()
        .args(["validate", "--archive"])
        .arg(&archive_path)
        .arg("--strategy")
        .arg(&strategy_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");

    // A strategy pushing an unknown resource must fail validation (exit 1).
    let bad_path = dir.path().join("bad.json");
    write(
        &bad_path,
        r#"{"kind":"custom","directives":[{"url":"https://shop.test/ghost.css","rank":1}]}"#,
    );
    let out = pushlab()
        .args(["validate", "--archive"])
        .arg(&archive_path)
        .arg("--strategy")
        .arg(&bad_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let config_path = dir.path().join("matrix.json");
    let report_path = dir.path().join("report.json");
    write(
        &config_path,
        &json!({
            "websites": [{ "name": "shop", "archive": archive_path }],
            "strategies": [
                { "kind": "no_push" },
                { "kind": "push_all" },
                { "kind": "push_first_n", "n": 1 }
            ],
            "link_preset": "dsl",
            "runs": 3,
            "seed": 9
        })
        .to_string(),
    );
    let out = pushlab()
        .args(["run", "--config"])
        .arg(&config_path)
        .args(["--format", "json", "--out"])
        .arg(&report_path)
        .env("PUSHLAB_SEED", "9")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["runs"] == 3));
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 2);

    // CSV output of the same config.
    let out = pushlab()
        .args(["run", "--config"])
        .arg(&config_path)
        .args(["--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.starts_with("website,strategy,"));
    assert_eq!(csv.lines().count(), 4);

    // Standalone comparison over the emitted rows.
    let rows_path = dir.path().join("rows.json");
    write(&rows_path, &serde_json::to_string(&report["rows"]).unwrap());
    let out = pushlab()
        .args(["compare", "--rows"])
        .arg(&rows_path)
        .args(["--baseline", "no_push"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let comparisons: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(comparisons.as_array().unwrap().len(), 2);
}

#[test]
fn order_command_prints_computed_order() {
    let dir = tempfile::tempdir().unwrap();
    let traces_path = dir.path().join("traces.json");
    let trace = |order: [&str; 2]| {
        json!({
            "entries": [
                { "resource_url": "https://w/", "parent": null, "weight": 16, "request_time_ms": 0.0 },
                { "resource_url": order[0], "parent": null, "weight": 16, "request_time_ms": 10.0 },
                { "resource_url": order[1], "parent": null, "weight": 16, "request_time_ms": 20.0 }
            ]
        })
    };
    write(
        &traces_path,
        &json!([
            trace(["https://w/a", "https://w/b"]),
            trace(["https://w/a", "https://w/b"]),
            trace(["https://w/b", "https://w/a"])
        ])
        .to_string(),
    );
    let out = pushlab()
        .args(["order", "--traces"])
        .arg(&traces_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines, vec!["https://w/a", "https://w/b"]);
}

#[test]
fn runtime_errors_exit_with_code_two() {
    let out = pushlab()
        .args(["run", "--config", "/nonexistent/matrix.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}
