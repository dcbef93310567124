use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_euler-mvs")).args(args).output().expect("binary runs")
}

fn tmp() -> std::path::PathBuf {
    let dir =
        std::env::temp_dir().join(format!("euler-mvs-cli-{}-{:?}", std::process::id(), std::thread::current().id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn riemann_passes_and_writes_report_and_svg() {
    let dir = tmp();
    let (out, svg) = (dir.join("r.json"), dir.join("r.svg"));
    let o = run(&["--no-timestamp", "--out", out.to_str().unwrap(), "--svg", svg.to_str().unwrap(), "riemann"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    assert!(r.get("generated_unix").is_none());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn failing_check_exits_one_and_names_it() {
    let dir = tmp();
    let out = dir.join("tight.json");
    let o = run(&["--no-timestamp", "--tol", "1e-300", "--out", out.to_str().unwrap(), "riemann", "--p-plus", "7"]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert!(r["first_failure"].is_string());
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn invalid_input_exits_two_without_output() {
    let dir = tmp();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1,,}").unwrap();
    let out = dir.join("never.json");
    let o = run(&["--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap(), "riemann"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1, column"));
    assert!(!out.exists());

    let o = run(&["--out", out.to_str().unwrap(), "--tol", "-1", "riemann"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["--svg", dir.join("w.svg").to_str().unwrap(), "wavecone"]).status.code(), Some(2));
}

#[test]
fn wavecone_reports_to_stdout() {
    let o = run(&["--no-timestamp", "wavecone"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["command"], "wavecone");
    assert!(r["checks"].as_array().is_some_and(|c| !c.is_empty()));
}
